#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "ivsg/core/error.hpp"
#include "ivsg/metrics/metrics.hpp"
#include "ivsg/service/service.hpp"
#include "ivsg/synth/dataset.hpp"
#include "ivsg/train/trainer.hpp"

using namespace ivsg;

namespace {

int generate(const std::string& out, int count, double ratio, synth::SceneConfig scene) {
  const auto ds = synth::generate_dataset(scene, count, ratio, out);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.eval.size() << " eval clips to " << out << "\n";
  return 0;
}

int train_command(const std::string& data, const std::string& out, const std::string& config_path,
                  std::optional<std::uint64_t> seed, const std::string& log_path, long max_steps, int eval_every) {
  auto ds = synth::load_dataset(data);
  train::TrainConfig cfg;
  cfg.model.object_classes = ds.vocabulary.num_objects();
  cfg.model.predicate_classes = ds.vocabulary.num_predicates();
  if (!config_path.empty()) cfg = train::load_train_config(config_path, cfg);
  if (seed) cfg.seed = *seed;
  if (max_steps > 0) cfg.max_steps = max_steps;
  if (eval_every > 0) cfg.eval_every = eval_every;
  cfg.validate();
  auto model = model::Model::create(cfg.model, cfg.seed);

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw IoError("cannot open log " + log_path);
    log = &log_file;
  }
  train::TrainOutputs outputs;
  outputs.checkpoint = out;
  outputs.log = log;
  if (cfg.eval_every > 0 && !ds.eval.empty()) {
    outputs.evaluate = [&](const model::Model& m, int) {
      metrics::EvalConfig ec;
      ec.runs = 1;
      ec.seed = cfg.seed;
      const auto r = metrics::robustness_protocol(m, ds.eval, ec);
      return nlohmann::json{{"recall_at_k", r.recall_at_k.mean}, {"spir", r.spir.mean}, {"plr", r.plr.mean}};
    };
  }
  const auto result = train::train(*model, ds.train, cfg, outputs);
  std::cerr << "steps " << result.steps << ", final loss " << result.last.total << "\n";
  if (result.diverged) {
    std::cerr << "training diverged: " << result.divergence << "\n";
    return 2;
  }
  return 0;
}

int eval_command(const std::string& ckpt, const std::string& data, metrics::EvalConfig ec, const std::string& json_path) {
  auto model = model::load_checkpoint(ckpt);
  const auto ds = synth::load_dataset(data);
  std::optional<model::Heatmap> heatmap;
  if (ec.discovery == metrics::DiscoveryMode::Heuristic) heatmap = metrics::object_heatmap(ds.train, model->config());
  const auto report = metrics::robustness_protocol(*model, ds.eval, ec, {}, heatmap ? &*heatmap : nullptr);
  const std::string json = report.to_json().dump(2);
  if (json_path.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream f(json_path);
    if (!f) throw IoError("cannot write " + json_path);
    f << json << "\n";
  }
  std::cout << report.to_table();
  return 0;
}

std::atomic<bool> g_interrupted{false};

int serve_command(const std::string& ckpt, const std::string& host, int port, service::ServiceConfig config) {
  std::shared_ptr<const model::Model> model = model::load_checkpoint(ckpt);
  service::SessionManager manager(model, std::move(config));
  service::HttpServer server(manager);
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  std::thread watcher([&] {
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  server.listen();
  g_interrupted = true;
  watcher.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-driven video scene graph toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  std::string gen_out;
  int count = 250;
  double ratio = 0.8;
  synth::SceneConfig scene;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", count, "Number of clips");
  gen->add_option("--split", ratio, "Fraction of clips in the train split");
  gen->add_option("--seed", scene.seed);
  gen->add_option("--frames", scene.frames);
  gen->add_option("--size", scene.height, "Frame height and width");
  gen->add_option("--entities", scene.num_entities);
  gen->add_option("--classes", scene.object_class_count);
  gen->add_option("--noise", scene.noise);

  auto* tr = app.add_subcommand("train", "Train a model");
  std::string data, ckpt_out, config_path, log_path;
  std::optional<std::uint64_t> seed;
  long max_steps = 0;
  int eval_every = 0;
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", ckpt_out, "Checkpoint path")->required();
  tr->add_option("--config", config_path, "key = value training config");
  tr->add_option("--seed", seed);
  tr->add_option("--log", log_path, "NDJSON metrics log (default stdout)");
  tr->add_option("--max-steps", max_steps);
  tr->add_option("--eval-every", eval_every, "Epochs between eval-split metrics");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint with the robustness protocol");
  std::string ckpt, json_path, prompt = "point", iou_mode = "tube", discovery = "learned";
  metrics::EvalConfig ec;
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--k", ec.k);
  ev->add_option("--tau", ec.tau);
  ev->add_option("--runs", ec.runs);
  ev->add_option("--seed", ec.seed);
  ev->add_option("--prompt", prompt)->check(CLI::IsMember({"point", "box", "mask"}));
  ev->add_option("--iou-mode", iou_mode)->check(CLI::IsMember({"tube", "frame"}));
  ev->add_option("--discovery", discovery)->check(CLI::IsMember({"learned", "heuristic"}));
  ev->add_option("--json", json_path, "Write the JSON report here instead of stdout");

  auto* sv = app.add_subcommand("serve", "Serve a checkpoint over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  long idle = 900;
  service::ServiceConfig sc;
  sv->add_option("--ckpt", ckpt)->required();
  sv->add_option("--port", port, "0 picks a free port");
  sv->add_option("--host", host);
  sv->add_option("--max-sessions", sc.max_sessions);
  sv->add_option("--idle-timeout", idle, "Seconds before an idle session expires");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) {
      scene.width = scene.height;
      return generate(gen_out, count, ratio, scene);
    }
    if (*tr) return train_command(data, ckpt_out, config_path, seed, log_path, max_steps, eval_every);
    if (*ev) {
      ec.prompt = prompt_kind_from_string(prompt);
      ec.iou_mode = iou_mode == "tube" ? IouMode::Tube : IouMode::FrameAverage;
      ec.discovery = discovery == "learned" ? metrics::DiscoveryMode::Learned : metrics::DiscoveryMode::Heuristic;
      return eval_command(ckpt, data, ec, json_path);
    }
    if (*sv) {
      sc.idle_timeout = std::chrono::seconds(idle);
      return serve_command(ckpt, host, port, sc);
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
