#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmpose/corruption.h"
#include "cmpose/harness.h"
#include "cmpose/head.h"
#include "doctest.h"

using namespace cmpose;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& f) const { return (path / f).string(); }
};

// toy-sized end-to-end config over generated datasets
Config toy_train_config(const TempDir& dir, int train_count, int val_count) {
    Config cfg = gradcheck_toy_config();
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr_schedule = "0:1e-3";
    cfg.out_dir = dir.file("run");
    cfg.train_data = dir.file("train.bin");
    cfg.val_data = dir.file("val.bin");

    DatasetParams p;
    p.seed = 5;
    p.count = train_count;
    p.height = cfg.image_height;
    p.width = cfg.image_width;
    p.num_keypoints = cfg.num_keypoints;
    p.mix = parse_corruption_mix("clean:0.6,occlude:0.2,blur:0.2");
    save_dataset(generate_dataset(p), cfg.train_data);
    p.seed = 6;
    p.count = val_count;
    save_dataset(generate_dataset(p), cfg.val_data);
    return cfg;
}

}  // namespace

TEST_CASE("train with epochs=0 checkpoints the initialization") {
    TempDir dir("cmpose_t0");
    Config cfg = toy_train_config(dir, 8, 4);
    cfg.epochs = 0;
    TrainResult r = train(cfg);

    LoadedCheckpoint lc = load_checkpoint(r.checkpoint_path);
    CHECK(lc.epoch == 0);

    CmPoseModel fresh(lc.model->config());
    fresh.init_weights(cfg.seed);
    for (size_t i = 0; i < fresh.params().size(); ++i)
        for (size_t j = 0; j < fresh.params().tensor(i).data.size(); ++j)
            CHECK(lc.model->params().tensor(i).data[j] ==
                  static_cast<double>(static_cast<float>(fresh.params().tensor(i).data[j])));
}

TEST_CASE("lambda=0 keeps the parameter trajectory identical with aux tasks on or off") {
    TempDir dir("cmpose_l0");
    Config with_aux = toy_train_config(dir, 16, 4);
    with_aux.lambda = 0.0;
    with_aux.epochs = 2;  // 8 optimizer steps
    with_aux.val_data.clear();
    with_aux.out_dir = dir.file("with_aux");

    Config without_aux = with_aux;
    without_aux.use_mask_task = false;
    without_aux.use_denoise_task = false;
    without_aux.out_dir = dir.file("without_aux");

    TrainResult ra = train(with_aux);
    TrainResult rb = train(without_aux);

    LoadedCheckpoint a = load_checkpoint(ra.checkpoint_path);
    LoadedCheckpoint b = load_checkpoint(rb.checkpoint_path);
    for (size_t i = 0; i < a.model->params().size(); ++i)
        CHECK(a.model->params().tensor(i).data == b.model->params().tensor(i).data);
}

TEST_CASE("evaluation equals the primary branch of a training-mode forward, bit-exact") {
    TempDir dir("cmpose_inf");
    Config cfg = toy_train_config(dir, 8, 6);
    cfg.epochs = 1;
    TrainResult r = train(cfg);

    LoadedCheckpoint lc = load_checkpoint(r.checkpoint_path);
    Dataset val = load_dataset(cfg.val_data);
    EvalResult ev = evaluate_model(*lc.model, val, std::nullopt, /*keep_heatmaps=*/true);

    const int aux_tokens = 3 * cfg.tokens_per_frame();
    for (size_t i = 0; i < val.samples.size(); ++i) {
        // training-mode tape: primary plus both auxiliary branches
        Tape t;
        auto out = lc.model->forward_primary(t, val.samples[i].clip);
        auto mask_plan = plan_corruption(aux_tokens, cfg.mask_ratio, CorruptionKind::mask,
                                         cfg.noise_sigma, cfg.embed_dim, 123 + i);
        auto noise_plan = plan_corruption(aux_tokens, cfg.noise_ratio, CorruptionKind::noise,
                                          cfg.noise_sigma, cfg.embed_dim, 456 + i);
        lc.model->forward_aux(t, out.feature_tokens, mask_plan);
        lc.model->forward_aux(t, out.feature_tokens, noise_plan);
        CHECK(t.value(out.heatmaps).data == ev.heatmaps[i]);
    }

    // evaluation is deterministic across repeated runs
    EvalResult ev2 = evaluate_model(*lc.model, val, std::nullopt, true);
    for (size_t i = 0; i < val.samples.size(); ++i) CHECK(ev.heatmaps[i] == ev2.heatmaps[i]);
    CHECK(ev.by_tag["all"].pck() == ev2.by_tag["all"].pck());
}

TEST_CASE("constant heatmaps give the PCK of always predicting pixel (0,0)") {
    TempDir dir("cmpose_const");
    Config cfg = toy_train_config(dir, 4, 24);
    CmPoseModel model(cfg);
    model.init_weights(3);
    // zero the head output layer: every heatmap is the constant bias 0
    ParamStore& params = model.params();
    std::fill(params.get("head.mlp.w2").data.begin(), params.get("head.mlp.w2").data.end(), 0.0);
    std::fill(params.get("head.mlp.b2").data.begin(), params.get("head.mlp.b2").data.end(), 0.0);

    Dataset val = load_dataset(cfg.val_data);
    EvalResult ev = evaluate_model(model, val);

    int correct = 0, total = 0;
    for (const Sample& s : val.samples)
        for (const Point& kp : s.keypoints) {
            ++total;
            if (std::hypot(kp.x, kp.y) <= 0.2 * s.bbox_diag) ++correct;
        }
    CHECK(ev.by_tag["all"].pck() ==
          doctest::Approx(static_cast<double>(correct) / total).epsilon(1e-12));
}

TEST_CASE("missing dataset aborts with an io error; metrics file is well-formed") {
    TempDir dir("cmpose_io");
    Config cfg = gradcheck_toy_config();
    cfg.train_data = dir.file("missing.bin");
    cfg.out_dir = dir.file("run");
    CHECK_THROWS_AS(train(cfg), IoError);

    Config ok = toy_train_config(dir, 8, 4);
    ok.epochs = 2;
    TrainResult r = train(ok);
    std::ifstream m(r.metrics_path);
    REQUIRE(m.good());
    std::string header;
    std::getline(m, header);
    CHECK(header == kMetricsHeader);
    int train_rows = 0, val_rows = 0;
    std::string line;
    while (std::getline(m, line)) {
        if (line.find(",train,") != std::string::npos) ++train_rows;
        if (line.find(",val,") != std::string::npos) ++val_rows;
    }
    CHECK(train_rows == 3);           // epoch 0 probe + 2 epochs
    CHECK(val_rows >= 3 * 2);         // tags present each epoch, small sets may miss some
    CHECK(fs::exists(r.manifest_path));

    // run reproducibility: identical config and seed give identical metrics
    Config again = ok;
    again.out_dir = dir.file("run2");
    TrainResult r2 = train(again);
    std::ifstream f1(r.metrics_path), f2(r2.metrics_path);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
}

TEST_CASE("gradcheck passes on the toy config and fails under a corrupted backward rule") {
    GradCheckReport ok = gradcheck(1);
    CHECK(ok.pass);
    CHECK(ok.op_errors.size() >= 8);
    CHECK(ok.group_errors.size() > 30);

    // negative control: corrupting gelu's backward must fail, naming gelu
    Tape::debug_set_backward_corruption("gelu", 1.02);
    GradCheckReport bad = gradcheck(1);
    Tape::debug_clear_backward_corruption();
    CHECK(!bad.pass);
    bool gelu_named = false;
    for (const auto& [name, err] : bad.op_errors)
        if (name == "gelu" && err > bad.tolerance) gelu_named = true;
    CHECK(gelu_named);

    // the report is deterministic given the seed
    GradCheckReport ok2 = gradcheck(1);
    CHECK(ok.to_string() == ok2.to_string());
}
