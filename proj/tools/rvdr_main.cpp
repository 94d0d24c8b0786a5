// rvdr: synthetic data generation, depth restoration training/evaluation, and
// the handover benchmark, behind one deterministic command line.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rvdr/config.hpp"
#include "rvdr/errors.hpp"
#include "rvdr/handover.hpp"
#include "rvdr/io.hpp"
#include "rvdr/metrics.hpp"
#include "rvdr/training.hpp"

namespace fs = std::filesystem;
using namespace rvdr;

namespace {

struct SplitSelection {
    std::vector<const SceneRecord*> scenes;
    std::vector<std::string> ids;
};

SplitSelection select_split(const Dataset& ds, const std::string& split) {
    SplitSelection out;
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        bool take = false;
        if (split == "train") take = ds.split[i] == 0;
        else if (split == "val") take = ds.split[i] == 1;
        else if (split == "test") take = ds.split[i] == 2;
        else if (split == "test-known") take = ds.split[i] == 2 && !ds.unknown_category[i];
        else if (split == "test-unknown") take = ds.unknown_category[i];
        else throw ConfigError("unknown split '" + split + "'");
        if (take) {
            out.scenes.push_back(&ds.scenes[i]);
            out.ids.push_back(ds.ids[i]);
        }
    }
    if (out.scenes.empty()) throw DataError("split '" + split + "' selects no scenes");
    return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    const RunConfig cfg = load_run_config(config_path);
    const std::string hash = config_hash(cfg);
    fs::create_directories(out_dir);
    save_json(out_dir + "/config.json", run_config_to_json(cfg));
    const auto rows = generate_dataset(cfg.dataset, out_dir, hash, cfg.threads);
    long low = 0;
    for (const auto& r : rows)
        if (r.supervised_fraction < 0.9) ++low;
    std::printf("gen-data: %zu scenes -> %s (config %s), %ld scene(s) under 90%% supervision\n",
                rows.size(), out_dir.c_str(), hash.c_str(), low);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir) {
    const RunConfig cfg = load_run_config(config_path);
    const std::string hash = config_hash(cfg);
    const Dataset ds = load_dataset(dataset_dir);
    fs::create_directories(out_dir);

    std::vector<TrainScene> train_scenes;
    std::vector<const SceneRecord*> val_scenes;
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        if (cfg.exclude_unknown && ds.unknown_category[i]) continue;
        if (ds.split[i] == 0) train_scenes.push_back({&ds.scenes[i], ds.unknown_category[i]});
        if (ds.split[i] == 1) val_scenes.push_back(&ds.scenes[i]);
    }
    if (train_scenes.empty()) throw DataError("no training scenes selected");

    Model model = Model::init(cfg.model, cfg.model_seed);
    std::ofstream log_stream(out_dir + "/train_log.jsonl", std::ios::trunc);
    auto on_epoch = [&](const EpochLog& log) {
        json j;
        j["epoch"] = log.epoch;
        j["lr"] = log.lr;
        j["loss_total"] = log.loss_total;
        j["loss_depth"] = log.loss_depth;
        j["loss_prob"] = log.loss_prob;
        j["loss_norm"] = log.loss_norm;
        j["excluded_rays"] = log.excluded_rays;
        if (log.val) {
            j["val"] = {{"rmse", log.val->rmse},     {"rel", log.val->rel},
                        {"mae", log.val->mae},       {"delta_105", log.val->delta_105},
                        {"delta_110", log.val->delta_110}, {"delta_125", log.val->delta_125}};
        }
        log_stream << j.dump() << "\n";
        log_stream.flush();
        std::printf("epoch %d lr %.2g loss %.4f (d %.4f p %.4f n %.4f)", log.epoch, log.lr,
                    log.loss_total, log.loss_depth, log.loss_prob, log.loss_norm);
        if (log.val) std::printf(" val rmse %.4f d1.05 %.1f", log.val->rmse, log.val->delta_105);
        std::printf("\n");
        std::fflush(stdout);
    };

    TrainResult result = train(std::move(model), train_scenes, val_scenes, cfg.training, on_epoch);
    save_checkpoint(out_dir + "/checkpoint.rvck", result.model, hash);
    if (result.diverged) {
        std::fprintf(stderr, "training diverged; last good checkpoint written\n");
        return 4;
    }
    std::printf("train: checkpoint -> %s/checkpoint.rvck (config %s)\n", out_dir.c_str(),
                hash.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& dataset_dir, const std::string& split,
             const std::string& out_dir) {
    const RunConfig cfg = load_run_config(config_path);
    std::string ckpt_hash;
    Model model = load_checkpoint(checkpoint_path, &ckpt_hash);
    if (ckpt_hash != config_hash(cfg))
        throw HashMismatchError("config drift: checkpoint " + ckpt_hash + " vs config " +
                                config_hash(cfg));
    const Dataset ds = load_dataset(dataset_dir);
    const SplitSelection sel = select_split(ds, split);
    const DatasetEvaluation ev = evaluate_dataset(model, sel.scenes, sel.ids, cfg.threads);

    json report;
    report["config_hash"] = ckpt_hash;
    report["split"] = split;
    report["scenes"] = sel.ids.size();
    auto metric_json = [](const MetricReport& m) {
        return json{{"rmse", m.rmse},           {"rel", m.rel},
                    {"mae", m.mae},             {"delta_105", m.delta_105},
                    {"delta_110", m.delta_110}, {"delta_125", m.delta_125},
                    {"pixels", m.pixels}};
    };
    report["restored"] = metric_json(ev.restored);
    report["corrupted"] = metric_json(ev.corrupted);
    json per_scene = json::array();
    for (const auto& row : ev.per_scene)
        per_scene.push_back({{"id", row.id},
                             {"restored", metric_json(row.restored)},
                             {"corrupted", metric_json(row.corrupted)}});
    report["per_scene"] = per_scene;

    const std::string table = metric_table(
        {{"corrupted input", ev.corrupted}, {"restored", ev.restored}});
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_json(out_dir + "/report.json", report);
        std::ofstream(out_dir + "/table.txt") << table;
    }
    std::printf("split %s (%zu scenes)\n%s", split.c_str(), sel.ids.size(), table.c_str());
    return 0;
}

int cmd_restore(const std::string& checkpoint_path, const std::string& dataset_dir,
                const std::string& scene_id, const std::string& out_dir, bool mask_only) {
    Model model = load_checkpoint(checkpoint_path);
    const Dataset ds = load_dataset(dataset_dir);
    const auto it = std::find(ds.ids.begin(), ds.ids.end(), scene_id);
    if (it == ds.ids.end()) throw DataError("scene '" + scene_id + "' not in dataset");
    const SceneRecord& scene = ds.scenes[size_t(it - ds.ids.begin())];

    const DepthImage restored = restore(model, scene, scene.object_mask);
    fs::create_directories(out_dir);
    write_depth_rvt(out_dir + "/restored.rvt", restored);

    std::ofstream xyz(out_dir + "/points.xyz", std::ios::trunc);
    long count = 0;
    for (int v = 0; v < restored.height; ++v) {
        for (int u = 0; u < restored.width; ++u) {
            if (mask_only && !scene.object_mask.at(v, u)) continue;
            const double d = restored.at(v, u);
            if (!(d > 0)) continue;
            const Ray ray = pixel_ray(scene.intrinsics, u, v);
            const Eigen::Vector3d p = ray.dir / ray.dir.z() * d;
            char line[96];
            std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
            xyz << line;
            ++count;
        }
    }
    std::printf("restore: %s -> %s (%ld points%s)\n", scene_id.c_str(), out_dir.c_str(), count,
                mask_only ? ", object mask only" : "");
    return 0;
}

int cmd_handover(const std::string& config_path, const std::string& scenario_dir,
                 const std::string& backend_name, const std::string& checkpoint_path,
                 const std::string& out_dir, bool make_benchmark) {
    const RunConfig cfg = load_run_config(config_path);

    std::vector<ScenarioScript> scenarios;
    if (make_benchmark) {
        fs::create_directories(scenario_dir);
        for (ScenarioScript& s : make_benchmark_scenarios(cfg.handover.seed)) {
            s.max_ticks = cfg.handover.max_ticks;
            s.max_speed = cfg.handover.max_speed;
            s.max_ang_speed = cfg.handover.max_ang_speed;
            s.grasp_candidates = cfg.handover.grasp_candidates;
            s.keypoint_noise_sigma = cfg.handover.keypoint_noise_sigma;
            save_json(scenario_dir + "/" + s.name + ".json", scenario_to_json(s));
        }
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(scenario_dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) scenarios.push_back(scenario_from_json(load_json(f)));
    if (scenarios.empty()) throw DataError("no scenario scripts in " + scenario_dir);

    RestorationBackend backend;
    Model model;
    if (backend_name == "oracle") {
        backend = oracle_backend();
    } else if (backend_name == "passthrough") {
        backend = passthrough_backend();
    } else if (backend_name == "model") {
        if (checkpoint_path.empty()) throw ConfigError("--checkpoint required for model backend");
        model = load_checkpoint(checkpoint_path);
        backend = [&model](const SceneRecord& s) { return restore(model, s, s.object_mask); };
    } else {
        throw ConfigError("unknown backend '" + backend_name + "'");
    }

    const BenchmarkReport report = run_benchmark(scenarios, backend);
    fs::create_directories(out_dir);
    json j = benchmark_to_json(report);
    j["backend"] = backend_name;
    j["config_hash"] = config_hash(cfg);
    save_json(out_dir + "/report.json", j);
    const std::string table = benchmark_table(report);
    std::ofstream(out_dir + "/table.txt") << table;
    fs::create_directories(out_dir + "/trajectories");
    for (const ScenarioOutcome& o : report.outcomes) {
        std::ofstream traj(out_dir + "/trajectories/" + o.name + ".jsonl", std::ios::trunc);
        for (const json& t : o.trajectory) traj << t.dump() << "\n";
    }
    std::printf("backend %s\n%s", backend_name.c_str(), table.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ray-voxel depth restoration for hand-held transparent objects"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, checkpoint_path, scene_id, split = "test";
    std::string scenario_dir, backend = "oracle";
    bool mask_only = false, make_benchmark = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output dataset directory")->required();

    CLI::App* tr = app.add_subcommand("train", "train the restoration model");
    tr->add_option("--config", config_path)->required();
    tr->add_option("--dataset", dataset_dir)->required();
    tr->add_option("--out", out_dir)->required();

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    ev->add_option("--config", config_path)->required();
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--dataset", dataset_dir)->required();
    ev->add_option("--split", split, "train|val|test|test-known|test-unknown");
    ev->add_option("--out", out_dir);

    CLI::App* rs = app.add_subcommand("restore", "restore one scene and dump artifacts");
    rs->add_option("--checkpoint", checkpoint_path)->required();
    rs->add_option("--dataset", dataset_dir)->required();
    rs->add_option("--scene", scene_id)->required();
    rs->add_option("--out", out_dir)->required();
    rs->add_flag("--mask-only", mask_only, "dump only object-mask points");

    CLI::App* ho = app.add_subcommand("handover", "run handover scenarios");
    ho->add_option("--config", config_path)->required();
    ho->add_option("--scenarios", scenario_dir)->required();
    ho->add_option("--backend", backend, "oracle|passthrough|model");
    ho->add_option("--checkpoint", checkpoint_path);
    ho->add_option("--out", out_dir)->required();
    ho->add_flag("--make-benchmark", make_benchmark, "write the built-in 30-scenario suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (tr->parsed()) return cmd_train(config_path, dataset_dir, out_dir);
        if (ev->parsed()) return cmd_eval(config_path, checkpoint_path, dataset_dir, split, out_dir);
        if (rs->parsed()) return cmd_restore(checkpoint_path, dataset_dir, scene_id, out_dir,
                                             mask_only);
        if (ho->parsed())
            return cmd_handover(config_path, scenario_dir, backend, checkpoint_path, out_dir,
                                make_benchmark);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const HashMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
