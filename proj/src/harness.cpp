#include "cmpose/harness.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cmpose/corruption.h"
#include "cmpose/fte.h"
#include "cmpose/head.h"
#include "cmpose/rng.h"

namespace cmpose {

const char* kMetricsHeader = "epoch,split,tag,loss_heatmap,loss_mask,loss_denoise,loss_total,pck";

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

Tensor gt_heatmap_tensor(const Sample& s, const Config& cfg) {
    HeatmapSet gt = make_gt_heatmaps(s.keypoints, cfg.image_height, cfg.image_width,
                                     cfg.heatmap_height, cfg.heatmap_width, cfg.gt_sigma);
    Tensor t;
    t.shape = {gt.num_keypoints, gt.height * gt.width};
    t.data = std::move(gt.maps);
    return t;
}

void check_dataset_matches(const Dataset& ds, const Config& cfg, const std::string& what) {
    if (ds.height != cfg.image_height || ds.width != cfg.image_width)
        throw ConfigError(what + ": dataset is " + std::to_string(ds.height) + "x" +
                          std::to_string(ds.width) + ", config wants " +
                          std::to_string(cfg.image_height) + "x" +
                          std::to_string(cfg.image_width));
    if (ds.num_keypoints != cfg.num_keypoints)
        throw ConfigError(what + ": dataset has " + std::to_string(ds.num_keypoints) +
                          " keypoints, config wants " + std::to_string(cfg.num_keypoints));
}

double mse_plain(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

}  // namespace

std::string metrics_row_csv(const MetricsRow& r) {
    std::ostringstream os;
    os << r.epoch << ',' << r.split << ',' << r.tag << ',' << fmt(r.loss_heatmap) << ','
       << fmt(r.loss_mask) << ',' << fmt(r.loss_denoise) << ',' << fmt(r.loss_total) << ','
       << fmt(r.pck);
    return os.str();
}

EvalResult evaluate_model(const CmPoseModel& model, const Dataset& data,
                          std::optional<CorruptionTag> tag_filter, bool keep_heatmaps) {
    const Config& cfg = model.config();
    check_dataset_matches(data, cfg, "evaluate");
    const int n = static_cast<int>(data.samples.size());
    const double sx = static_cast<double>(cfg.image_width) / cfg.heatmap_width;
    const double sy = static_cast<double>(cfg.image_height) / cfg.heatmap_height;

    std::vector<int> correct(static_cast<size_t>(n), 0), total(static_cast<size_t>(n), 0);
    std::vector<double> loss(static_cast<size_t>(n), 0.0);
    std::vector<char> used(static_cast<size_t>(n), 0);
    std::vector<std::vector<double>> heatmaps(keep_heatmaps ? static_cast<size_t>(n) : 0);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const Sample& s = data.samples[static_cast<size_t>(i)];
        if (tag_filter && s.tag != *tag_filter) continue;
        used[static_cast<size_t>(i)] = 1;

        Tape t(false);
        auto out = model.forward_primary(t, s.clip);
        const Tensor& hm = t.value(out.heatmaps);

        const Tensor gt = gt_heatmap_tensor(s, cfg);
        loss[static_cast<size_t>(i)] = mse_plain(hm.data, gt.data);

        const auto peaks = argmax_decode(hm, cfg.heatmap_height, cfg.heatmap_width);
        const double tol = 0.2 * s.bbox_diag;
        int ok = 0;
        for (int k = 0; k < cfg.num_keypoints; ++k) {
            const double px = peaks[static_cast<size_t>(k)].second * sx;
            const double py = peaks[static_cast<size_t>(k)].first * sy;
            const Point& kp = s.keypoints[static_cast<size_t>(k)];
            if (std::hypot(px - kp.x, py - kp.y) <= tol) ++ok;
        }
        correct[static_cast<size_t>(i)] = ok;
        total[static_cast<size_t>(i)] = cfg.num_keypoints;
        if (keep_heatmaps) heatmaps[static_cast<size_t>(i)] = hm.data;
    }

    EvalResult res;
    for (int i = 0; i < n; ++i) {
        if (!used[static_cast<size_t>(i)]) continue;
        const Sample& s = data.samples[static_cast<size_t>(i)];
        for (const std::string key : {std::string("all"), std::string(tag_name(s.tag))}) {
            EvalTagResult& tr = res.by_tag[key];
            tr.keypoints_total += total[static_cast<size_t>(i)];
            tr.keypoints_correct += correct[static_cast<size_t>(i)];
            tr.loss_heatmap_sum += loss[static_cast<size_t>(i)];
            tr.samples += 1;
        }
    }
    if (keep_heatmaps) res.heatmaps = std::move(heatmaps);
    return res;
}

EvalResult evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_path,
                               std::optional<CorruptionTag> tag_filter) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    Dataset data = load_dataset(data_path);
    return evaluate_model(*ckpt.model, data, tag_filter);
}

TrainResult train(const Config& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    Dataset train_ds = load_dataset(cfg.train_data);
    check_dataset_matches(train_ds, cfg, "train");
    if (cfg.max_train_samples > 0 &&
        cfg.max_train_samples < static_cast<int>(train_ds.samples.size()))
        train_ds.samples.resize(static_cast<size_t>(cfg.max_train_samples));
    const int n_train = static_cast<int>(train_ds.samples.size());
    if (n_train == 0) throw ConfigError("train: empty training dataset");

    const bool have_val = !cfg.val_data.empty();
    Dataset val_ds;
    if (have_val) {
        val_ds = load_dataset(cfg.val_data);
        check_dataset_matches(val_ds, cfg, "val");
    }

    std::filesystem::create_directories(cfg.out_dir);
    const std::string metrics_path = cfg.out_dir + "/metrics.csv";
    const std::string ckpt_path = cfg.out_dir + "/ckpt.cmpz";
    const std::string manifest_path = cfg.out_dir + "/manifest.json";
    const std::string log_path = cfg.out_dir + "/train.log";

    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    metrics << kMetricsHeader << "\n";
    std::ofstream log(log_path);

    CmPoseModel model(cfg);
    model.init_weights(cfg.seed);

    AdamW::Options opts;
    opts.weight_decay = cfg.weight_decay;
    opts.schedule = cfg.parse_lr_schedule();
    AdamW optimizer(model.params(), opts);

    TrainResult result;
    result.checkpoint_path = ckpt_path;
    result.metrics_path = metrics_path;
    result.manifest_path = manifest_path;

    const int aux_tokens = 3 * cfg.tokens_per_frame();

    // one sample's forward + losses; plans are built here iff the aux tasks
    // are enabled (evaluation never reaches this path)
    auto sample_losses = [&](Tape& t, const Sample& s, std::uint64_t batch_seed, int position,
                             double* lh, double* lm, double* ld) {
        auto out = model.forward_primary(t, s.clip);
        Var gt = t.constant(gt_heatmap_tensor(s, cfg));
        Var lh_v = heatmap_loss(t, out.heatmaps, gt);
        Var lm_v = t.constant(Tensor({1}, 0.0));
        Var ld_v = t.constant(Tensor({1}, 0.0));
        if (cfg.use_mask_task) {
            const auto plan =
                plan_corruption(aux_tokens, cfg.mask_ratio, CorruptionKind::mask, cfg.noise_sigma,
                                cfg.embed_dim,
                                mix_seed(batch_seed, RngStream::mask_plan,
                                         static_cast<std::uint64_t>(position)));
            lm_v = model.forward_aux(t, out.feature_tokens, plan);
        }
        if (cfg.use_denoise_task) {
            const auto plan =
                plan_corruption(aux_tokens, cfg.noise_ratio, CorruptionKind::noise,
                                cfg.noise_sigma, cfg.embed_dim,
                                mix_seed(batch_seed, RngStream::noise_plan,
                                         static_cast<std::uint64_t>(position)));
            ld_v = model.forward_aux(t, out.feature_tokens, plan);
        }
        Var lt_v = total_loss(t, lh_v, lm_v, ld_v, cfg.lambda);
        *lh = t.value(lh_v).data[0];
        *lm = t.value(lm_v).data[0];
        *ld = t.value(ld_v).data[0];
        return lt_v;
    };

    auto write_val_rows = [&](int epoch_label) -> double {
        if (!have_val) return 0.0;
        EvalResult ev = evaluate_model(model, val_ds);
        for (const char* tag : {"all", "clean", "occlude", "blur"}) {
            auto it = ev.by_tag.find(tag);
            if (it == ev.by_tag.end()) continue;
            MetricsRow row{epoch_label, "val", tag, it->second.loss_heatmap(), 0.0, 0.0,
                           it->second.loss_heatmap(), it->second.pck()};
            metrics << metrics_row_csv(row) << "\n";
        }
        metrics.flush();
        auto it = ev.by_tag.find("clean");
        if (it == ev.by_tag.end()) it = ev.by_tag.find("all");
        return it != ev.by_tag.end() ? it->second.pck() : 0.0;
    };

    // epoch 0: the training objective before any update, on a subsample
    {
        const int probe = std::min(n_train, 96);
        double sh = 0.0, sm = 0.0, sd = 0.0, st = 0.0;
        for (int i = 0; i < probe; ++i) {
            Tape t(false);
            double lh, lm, ld;
            const std::uint64_t batch_seed =
                cfg.corruption_seed_base + static_cast<std::uint64_t>(i / cfg.batch_size);
            Var lt = sample_losses(t, train_ds.samples[static_cast<size_t>(i)], batch_seed,
                                   i % cfg.batch_size, &lh, &lm, &ld);
            sh += lh;
            sm += lm;
            sd += ld;
            st += t.value(lt).data[0];
        }
        MetricsRow row{0, "train", "all", sh / probe, sm / probe, sd / probe, st / probe,
                       std::nan("")};
        metrics << metrics_row_csv(row) << "\n";
        result.initial_total_loss = st / probe;
        result.final_total_loss = st / probe;
    }
    result.untrained_clean_pck = write_val_rows(0);
    result.final_clean_pck = result.untrained_clean_pck;
    save_checkpoint(ckpt_path, model, 0, 0, cfg.seed);

    std::uint64_t global_step = 0;
    std::uint64_t global_batch_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(cfg.seed, RngStream::data_order, static_cast<std::uint64_t>(epoch));
        const std::vector<int> order = order_rng.permutation(n_train);

        double sh = 0.0, sm = 0.0, sd = 0.0, st = 0.0;
        int counted = 0;
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int batch_n = std::min(cfg.batch_size, n_train - start);
            const std::uint64_t batch_seed = cfg.corruption_seed_base + global_batch_index;
            log << "epoch " << epoch + 1 << " step " << global_step << " batch_seed "
                << batch_seed << "\n";
            for (int b = 0; b < batch_n; ++b) {
                const Sample& s = train_ds.samples[static_cast<size_t>(order[static_cast<size_t>(start + b)])];
                Tape t;
                double lh, lm, ld;
                Var lt = sample_losses(t, s, batch_seed, b, &lh, &lm, &ld);
                const double lt_val = t.value(lt).data[0];
                if (!std::isfinite(lt_val))
                    throw ContractError(
                        "non-finite loss at epoch " + std::to_string(epoch + 1) + " step " +
                        std::to_string(global_step) + "; replay with batch_seed " +
                        std::to_string(batch_seed) + " sample position " + std::to_string(b));
                sh += lh;
                sm += lm;
                sd += ld;
                st += lt_val;
                ++counted;
                t.backward(t.scale(lt, 1.0 / batch_n));
            }
            optimizer.step(epoch);
            optimizer.zero_grads();
            ++global_step;
            ++global_batch_index;
        }

        MetricsRow row{epoch + 1, "train", "all", sh / counted, sm / counted, sd / counted,
                       st / counted, std::nan("")};
        metrics << metrics_row_csv(row) << "\n";
        result.final_total_loss = st / counted;
        result.final_clean_pck = write_val_rows(epoch + 1);
        save_checkpoint(ckpt_path, model, epoch + 1, global_step, cfg.seed);
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    nlohmann::json manifest;
    manifest["artifact"] = "cmpose";
    manifest["version"] = "0.1.0";
    manifest["config"] = nlohmann::json::parse(
        [&] {
            nlohmann::json j;
            std::istringstream is(cfg.to_text());
            std::string line;
            while (std::getline(is, line)) {
                const size_t eq = line.find('=');
                if (eq != std::string::npos) {
                    std::string key = line.substr(0, eq - 1);
                    std::string val = line.substr(eq + 2);
                    j[key] = val;
                }
            }
            return j.dump();
        }());
    manifest["seed"] = cfg.seed;
    manifest["corruption_seed_rule"] = "batch_seed = corruption_seed_base + global_batch_index";
    manifest["train_samples"] = n_train;
    manifest["val_samples"] = have_val ? static_cast<int>(val_ds.samples.size()) : 0;
    manifest["parameters"] = model.params().total_params();
    manifest["wall_seconds"] = result.wall_seconds;
    std::ofstream mf(manifest_path);
    mf << manifest.dump(2) << "\n";

    return result;
}

std::vector<AblationRow> ablate(const Config& base, const std::vector<std::uint64_t>& seeds,
                                const std::string& out_csv) {
    struct Variant {
        const char* name;
        void (*apply)(Config&);
    };
    const Variant variants[] = {
        {"full", [](Config&) {}},
        {"mask_only", [](Config& c) { c.use_denoise_task = false; }},
        {"denoise_only", [](Config& c) { c.use_mask_task = false; }},
        {"primary_only",
         [](Config& c) {
             c.use_mask_task = false;
             c.use_denoise_task = false;
         }},
        {"causal_only", [](Config& c) { c.use_noncausal_tokens = false; }},
        {"no_fte", [](Config& c) { c.use_fte = false; }},
    };

    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        for (std::uint64_t seed : seeds) {
            Config cfg = base;
            v.apply(cfg);
            cfg.seed = seed;
            cfg.out_dir = base.out_dir + "/ablate/" + v.name + "_s" + std::to_string(seed);
            TrainResult tr = train(cfg);

            LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);
            Dataset val = load_dataset(cfg.val_data);
            EvalResult ev = evaluate_model(*ckpt.model, val);

            EvalTagResult corrupted;
            for (const char* tag : {"occlude", "blur"}) {
                auto it = ev.by_tag.find(tag);
                if (it == ev.by_tag.end()) continue;
                corrupted.keypoints_total += it->second.keypoints_total;
                corrupted.keypoints_correct += it->second.keypoints_correct;
                corrupted.samples += it->second.samples;
            }
            AblationRow row{v.name, seed,
                            ev.by_tag.count("clean") ? ev.by_tag["clean"].pck() : 0.0,
                            corrupted.pck(), ev.by_tag.count("all") ? ev.by_tag["all"].pck() : 0.0};
            rows.push_back(row);
        }
    }

    std::filesystem::create_directories(std::filesystem::path(out_csv).parent_path());
    std::ofstream f(out_csv);
    if (!f) throw IoError("cannot write " + out_csv);
    f << "variant,seed,pck_clean,pck_corrupted,pck_all\n";
    for (const AblationRow& r : rows)
        f << r.variant << ',' << r.seed << ',' << fmt(r.pck_clean) << ',' << fmt(r.pck_corrupted)
          << ',' << fmt(r.pck_all) << "\n";
    return rows;
}

std::vector<SweepRow> sweep_ratios(const Config& base, const std::string& param,
                                   const std::vector<double>& values,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& out_csv) {
    if (param != "mask_ratio" && param != "noise_ratio")
        throw ConfigError("sweep parameter must be mask_ratio or noise_ratio, got " + param);
    for (double v : values)
        if (v < 0.0 || v > 1.0) throw ConfigError("sweep value " + fmt(v) + " outside [0,1]");

    std::vector<SweepRow> rows;
    for (double value : values) {
        for (std::uint64_t seed : seeds) {
            Config cfg = base;
            if (param == "mask_ratio")
                cfg.mask_ratio = value;
            else
                cfg.noise_ratio = value;
            cfg.seed = seed;
            std::ostringstream dir;
            dir << base.out_dir << "/sweep/" << param << "_" << value << "_s" << seed;
            cfg.out_dir = dir.str();
            TrainResult tr = train(cfg);

            LoadedCheckpoint ckpt = load_checkpoint(tr.checkpoint_path);
            Dataset val = load_dataset(cfg.val_data);
            EvalResult ev = evaluate_model(*ckpt.model, val);
            rows.push_back({value, seed, ev.by_tag.count("all") ? ev.by_tag["all"].pck() : 0.0});
        }
    }

    std::filesystem::create_directories(std::filesystem::path(out_csv).parent_path());
    std::ofstream f(out_csv);
    if (!f) throw IoError("cannot write " + out_csv);
    f << "value,seed,pck\n";
    for (const SweepRow& r : rows) f << fmt(r.value) << ',' << r.seed << ',' << fmt(r.pck) << "\n";
    return rows;
}

Config gradcheck_toy_config() {
    Config c;
    c.image_height = 16;
    c.image_width = 16;
    c.patch_size = 8;  // 2x2 patch grid, N = 4
    c.embed_dim = 8;
    c.num_keypoints = 3;
    c.heads = 2;
    c.depth = 1;
    c.mlp_ratio = 2;
    c.heatmap_height = 16;
    c.heatmap_width = 16;
    c.head_hidden = 8;
    c.causal_per_keypoint = 1;
    c.num_clusters = 2;
    c.knn_k = 2;
    c.gt_sigma = 1.5;
    c.validate();
    return c;
}

namespace {

// FD audit of a single op through a weighted-sum loss
double op_fd_error(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                   std::vector<Tensor> inputs, Rng& rng) {
    for (Tensor& in : inputs) in.requires_grad = true;
    auto forward = [&](Tape& t) {
        std::vector<Var> vars;
        for (Tensor& in : inputs) vars.push_back(t.param(in));
        return build(t, vars);
    };
    std::vector<double> w;
    {
        Tape t(false);
        Var out = forward(t);
        w.resize(t.value(out).data.size());
        for (double& x : w) x = rng.uniform(-1.0, 1.0);
    }
    auto loss_value = [&]() {
        Tape t(false);
        Var out = forward(t);
        const Tensor& o = t.value(out);
        double s = 0.0;
        for (size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * w[i];
        return s;
    };
    {
        Tape t;
        Var out = forward(t);
        Tensor wt;
        wt.shape = t.value(out).shape;
        wt.data = w;
        t.backward(t.sum_all(t.mul(out, t.constant(std::move(wt)))));
    }
    double worst = 0.0;
    const double h = 1e-6;
    for (Tensor& in : inputs) {
        const std::vector<double> analytic = in.grad;
        for (size_t i = 0; i < in.data.size(); ++i) {
            const double saved = in.data[i];
            in.data[i] = saved + h;
            const double up = loss_value();
            in.data[i] = saved - h;
            const double dn = loss_value();
            in.data[i] = saved;
            const double numeric = (up - dn) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

Tensor rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

GradCheckReport gradcheck(std::uint64_t seed, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;
    Rng rng(seed, RngStream::test);

    // per-op audits: a corrupted backward rule fails here by name
    using Builder = std::function<Var(Tape&, std::vector<Var>&)>;
    const std::vector<std::pair<std::string, std::function<double()>>> ops = {
        {"matmul",
         [&] {
             return op_fd_error([](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
                                {rand_t({4, 3}, rng), rand_t({3, 5}, rng)}, rng);
         }},
        {"add",
         [&] {
             return op_fd_error([](Tape& t, std::vector<Var>& v) { return t.add(v[0], v[1]); },
                                {rand_t({3, 4}, rng), rand_t({3, 4}, rng)}, rng);
         }},
        {"mul",
         [&] {
             return op_fd_error([](Tape& t, std::vector<Var>& v) { return t.mul(v[0], v[1]); },
                                {rand_t({3, 4}, rng), rand_t({3, 4}, rng)}, rng);
         }},
        {"softmax_rows",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) { return t.softmax_rows(v[0]); },
                 {rand_t({4, 5}, rng, -3.0, 3.0)}, rng);
         }},
        {"layer_norm_rows",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) { return t.layer_norm_rows(v[0], v[1], v[2]); },
                 {rand_t({4, 6}, rng), rand_t({6}, rng, 0.5, 1.5), rand_t({6}, rng)}, rng);
         }},
        {"gelu",
         [&] {
             return op_fd_error([](Tape& t, std::vector<Var>& v) { return t.gelu(v[0]); },
                                {rand_t({4, 5}, rng, -3.0, 3.0)}, rng);
         }},
        {"add_rowvec",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) { return t.add_rowvec(v[0], v[1]); },
                 {rand_t({4, 5}, rng), rand_t({5}, rng)}, rng);
         }},
        {"gather_rows",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) { return t.gather_rows(v[0], {0, 2, 0}); },
                 {rand_t({4, 5}, rng)}, rng);
         }},
        {"mha_segments",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) { return t.mha_segments(v[0], 3, 2, 0.5); },
                 {rand_t({6, 12}, rng)}, rng);
         }},
        {"div_by_scalar",
         [&] {
             return op_fd_error(
                 [](Tape& t, std::vector<Var>& v) {
                     return t.div_by_scalar(v[0], t.sum_all(t.mul(v[1], v[1])));
                 },
                 {rand_t({3, 4}, rng), rand_t({2}, rng, 0.5, 1.5)}, rng);
         }},
    };
    for (const auto& [name, run] : ops) report.op_errors.emplace_back(name, run());

    // full-pipeline audit on the toy config with frozen discrete choices
    const Config cfg = gradcheck_toy_config();
    CmPoseModel model(cfg);
    model.init_weights(seed);

    DatasetParams dp;
    dp.seed = seed;
    dp.count = 1;
    dp.height = cfg.image_height;
    dp.width = cfg.image_width;
    dp.num_keypoints = cfg.num_keypoints;
    dp.mix = {1.0, 0.0, 0.0};
    const Sample sample = generate_sample(dp, 0);
    const Tensor gt = gt_heatmap_tensor(sample, cfg);

    const int aux_tokens = 3 * cfg.tokens_per_frame();
    const auto mask_plan =
        plan_corruption(aux_tokens, cfg.mask_ratio, CorruptionKind::mask, cfg.noise_sigma,
                        cfg.embed_dim, mix_seed(seed, RngStream::mask_plan));
    const auto noise_plan =
        plan_corruption(aux_tokens, cfg.noise_ratio, CorruptionKind::noise, cfg.noise_sigma,
                        cfg.embed_dim, mix_seed(seed, RngStream::noise_plan));

    auto build_loss = [&](Tape& t, const CmPoseModel::Trace* frozen) {
        auto out = model.forward_primary(t, sample.clip, frozen);
        Var lh = heatmap_loss(t, out.heatmaps, t.constant(gt));
        Var lm = model.forward_aux(t, out.feature_tokens, mask_plan);
        Var ld = model.forward_aux(t, out.feature_tokens, noise_plan);
        return std::make_pair(total_loss(t, lh, lm, ld, cfg.lambda), out.trace);
    };

    CmPoseModel::Trace trace;
    {
        Tape t;
        auto [loss, tr] = build_loss(t, nullptr);
        trace = tr;
        t.backward(loss);
    }

    auto loss_with_frozen = [&]() {
        Tape t(false);
        auto [loss, tr] = build_loss(t, &trace);
        return t.value(loss).data[0];
    };

    ParamStore& params = model.params();
    const double h = 1e-6;
    for (size_t g = 0; g < params.size(); ++g) {
        Tensor& p = params.tensor(g);
        const std::vector<double> analytic =
            p.grad.size() == p.data.size() ? p.grad : std::vector<double>(p.data.size(), 0.0);
        Rng pick(mix_seed(seed, RngStream::test, g + 1));
        const int n_entries = static_cast<int>(
            std::min<std::int64_t>(p.numel(), 24));
        const std::vector<int> entries =
            pick.sample_without_replacement(static_cast<int>(p.numel()), n_entries);
        double worst = 0.0;
        for (int idx : entries) {
            const double saved = p.data[static_cast<size_t>(idx)];
            p.data[static_cast<size_t>(idx)] = saved + h;
            const double up = loss_with_frozen();
            p.data[static_cast<size_t>(idx)] = saved - h;
            const double dn = loss_with_frozen();
            p.data[static_cast<size_t>(idx)] = saved;
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic[static_cast<size_t>(idx)];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.group_errors.emplace_back(params.name(g), worst);
    }

    report.pass = true;
    for (const auto& [name, err] : report.op_errors)
        if (!(err <= tolerance)) report.pass = false;
    for (const auto& [name, err] : report.group_errors)
        if (!(err <= tolerance)) report.pass = false;
    return report;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << "op-level checks (tolerance " << tolerance << "):\n";
    for (const auto& [name, err] : op_errors)
        os << "  " << (err <= tolerance ? "ok  " : "FAIL") << "  " << name << "  max_rel_err "
           << err << "\n";
    os << "parameter-group checks:\n";
    for (const auto& [name, err] : group_errors)
        os << "  " << (err <= tolerance ? "ok  " : "FAIL") << "  " << name << "  max_rel_err "
           << err << "\n";
    os << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

std::string cluster_demo_text() {
    // six 2-d points, two tight triplets
    Tensor pts = Tensor::from({6, 2}, {0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 1.0, 1.0, 1.0, 1.1, 0.9, 1.0});
    const char* names = "ABCDEF";
    ClusterResult res = dpc_knn(pts, 2, 2);
    std::ostringstream os;
    os << "DPC-KNN demo: 6 points, k=2, L=2\n";
    os << "point   rho        delta      rho*delta  assigned_to\n";
    for (int i = 0; i < 6; ++i) {
        os << "  " << names[i] << "   ";
        os.precision(6);
        os << std::fixed;
        os << res.rho[static_cast<size_t>(i)] << "   " << res.delta[static_cast<size_t>(i)]
           << "   " << res.rho[static_cast<size_t>(i)] * res.delta[static_cast<size_t>(i)]
           << "   " << names[res.centers[static_cast<size_t>(res.assignment[static_cast<size_t>(i)])]]
           << "\n";
    }
    os << "centers:";
    for (int c : res.centers) os << ' ' << names[c];
    os << "\n";
    return os.str();
}

}  // namespace cmpose
