#include "ivsg/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <variant>

#include "ivsg/core/error.hpp"
#include "ivsg/nn/optim.hpp"

namespace ivsg::train {

void TrainConfig::validate() const {
  if (epochs < 0 || clip_length < 1 || batch_size < 1 || max_steps < 0 || eval_every < 0 || checkpoint_every < 0)
    throw ContractError("epochs, clip_length, batch_size and cadences must be non-negative (lengths positive)");
  for (double lr : {lr_sch, lr_didm_start, lr_didm_end, lr_backbone_start, lr_backbone_end})
    if (!(lr > 0.0)) throw ContractError("learning rates must be > 0");
  for (double p : {prompt_point, prompt_box, prompt_mask})
    if (!(p >= 0.0)) throw ContractError("prompt probabilities must be >= 0");
  if (std::abs(prompt_point + prompt_box + prompt_mask - 1.0) > 1e-9)
    throw ContractError("prompt probabilities must sum to 1");
  if (!(unmatched_weight >= 0.0) || !(negative_prob >= 0.0 && negative_prob <= 1.0) || !(weight_decay >= 0.0))
    throw ContractError("invalid regularization settings");
  weights.validate();
  model.validate();
}

namespace {

using Field = std::variant<int*, long*, double*, bool*, std::uint64_t*>;

std::map<std::string, Field> fields(TrainConfig& c) {
  auto& m = c.model;
  return {{"epochs", &c.epochs},
          {"clip_length", &c.clip_length},
          {"batch_size", &c.batch_size},
          {"lr.sch", &c.lr_sch},
          {"lr.didm.start", &c.lr_didm_start},
          {"lr.didm.end", &c.lr_didm_end},
          {"lr.backbone.start", &c.lr_backbone_start},
          {"lr.backbone.end", &c.lr_backbone_end},
          {"prompt.point", &c.prompt_point},
          {"prompt.box", &c.prompt_box},
          {"prompt.mask", &c.prompt_mask},
          {"seed", &c.seed},
          {"weight_decay", &c.weight_decay},
          {"grad_clip", &c.grad_clip},
          {"unmatched_weight", &c.unmatched_weight},
          {"negative_prob", &c.negative_prob},
          {"eval_every", &c.eval_every},
          {"checkpoint_every", &c.checkpoint_every},
          {"max_steps", &c.max_steps},
          {"weights.bce", &c.weights.bce},
          {"weights.dice", &c.weights.dice},
          {"weights.iou", &c.weights.iou},
          {"weights.l2", &c.weights.l2},
          {"weights.sub", &c.weights.sub},
          {"weights.obj", &c.weights.obj},
          {"weights.rel", &c.weights.rel},
          {"model.image_height", &m.image_height},
          {"model.image_width", &m.image_width},
          {"model.image_channels", &m.image_channels},
          {"model.object_classes", &m.object_classes},
          {"model.predicate_classes", &m.predicate_classes},
          {"model.hires_channels", &m.hires_channels},
          {"model.mid_channels", &m.mid_channels},
          {"model.dim", &m.dim},
          {"model.heads", &m.heads},
          {"model.encoder_layers", &m.encoder_layers},
          {"model.decoder_layers", &m.decoder_layers},
          {"model.mlp_hidden", &m.mlp_hidden},
          {"model.upscale_channels", &m.upscale_channels},
          {"model.freeze_backbone", &m.freeze_backbone},
          {"model.num_queries", &m.num_queries},
          {"model.discovery_layers", &m.discovery_layers},
          {"model.point_head_hidden", &m.point_head_hidden},
          {"model.class_hidden", &m.class_hidden}};
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  if constexpr (std::is_same_v<T, double>) {
    try {
      std::size_t used = 0;
      out = std::stod(text, &used);
      return used == text.size() && std::isfinite(out);
    } catch (const std::exception&) {
      return false;
    }
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
  }
}

}  // namespace

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  auto table = fields(base);
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(number);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", where);
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw FormatError("unknown key '" + key + "'", where);
    const bool ok = std::visit(
        [&](auto* field) {
          using T = std::remove_pointer_t<decltype(field)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") *field = true;
            else if (value == "false" || value == "0") *field = false;
            else return false;
            return true;
          } else {
            return parse_number(value, *field);
          }
        },
        it->second);
    if (!ok) throw FormatError("bad value '" + value + "' for '" + key + "'", where);
  }
  try {
    base.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what(), "config");
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_train_config(ss.str(), std::move(base));
}

std::string to_text(const TrainConfig& config) {
  TrainConfig copy = config;
  std::ostringstream out;
  out.precision(17);
  for (const auto& [key, field] : fields(copy)) {
    out << key << " = ";
    std::visit(
        [&](auto* f) {
          if constexpr (std::is_same_v<std::remove_pointer_t<decltype(f)>, bool>) out << (*f ? "true" : "false");
          else out << *f;
        },
        field);
    out << "\n";
  }
  return out.str();
}

PromptKind sample_prompt_kind(const TrainConfig& c, std::mt19937_64& rng) {
  std::discrete_distribution<int> pick({c.prompt_point, c.prompt_box, c.prompt_mask});
  return static_cast<PromptKind>(pick(rng));
}

namespace {

std::vector<nn::Mat> snapshot(const model::Model& m) {
  std::vector<nn::Mat> out;
  for (const auto& p : m.parameters().all()) out.push_back(p->value);
  return out;
}

void restore(model::Model& m, const std::vector<nn::Mat>& values) {
  const auto& ps = m.parameters().all();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

bool gradients_finite(const model::Model& m) {
  for (const auto& p : m.parameters().all())
    if (!p->grad.allFinite()) return false;
  return true;
}

}  // namespace

TrainResult train(model::Model& model, const std::vector<synth::AnnotatedClip>& clips, const TrainConfig& config,
                  const TrainOutputs& outputs) {
  config.validate();
  if (clips.empty()) throw ContractError("training set is empty");
  if (config.model != model.config()) throw ContractError("train config and model architecture differ");

  const long per_epoch = (static_cast<long>(clips.size()) + config.batch_size - 1) / config.batch_size;
  long total_steps = per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  using nn::Schedule;
  nn::AdamW optimizer(model.parameters(),
                      {{model::kSchGroup, Schedule{Schedule::Kind::Constant, config.lr_sch, config.lr_sch}},
                       {model::kDidmGroup, Schedule{Schedule::Kind::Cosine, config.lr_didm_start, config.lr_didm_end}},
                       {model::kBackboneGroup,
                        Schedule{Schedule::Kind::Cosine, config.lr_backbone_start, config.lr_backbone_end}}},
                      Schedule{Schedule::Kind::Constant, config.lr_sch, config.lr_sch}, std::max(1L, total_steps),
                      nn::AdamW::Options{0.9, 0.999, 1e-8, config.weight_decay, config.grad_clip});

  ObjectiveOptions options;
  options.unmatched_weight = config.unmatched_weight;
  options.match_weights = config.weights;

  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  TrainResult result;
  auto last_good = snapshot(model);
  auto log = [&](const nlohmann::json& record) {
    if (outputs.log) *outputs.log << record.dump() << "\n" << std::flush;
  };
  auto save = [&](int epoch) {
    if (outputs.checkpoint)
      model::save_checkpoint(model, *outputs.checkpoint,
                             {{"epoch", epoch}, {"steps", result.steps}, {"train_config", to_text(config)}});
  };

  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs && result.steps < total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && result.steps < total_steps;
         start += static_cast<std::size_t>(config.batch_size)) {
      model.parameters().zero_grad();
      LossBreakdown sum;
      int matched = 0;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      try {
        for (std::size_t i = start; i < stop; ++i) {
          const auto& clip = clips[order[i]];
          auto subjects = clip.subject_entities();
          if (subjects.empty())
            for (const auto& e : clip.entities) subjects.push_back(e.id);
          const int subject = subjects[std::uniform_int_distribution<std::size_t>(0, subjects.size() - 1)(rng)];
          const PromptKind kind = sample_prompt_kind(config, rng);
          const Episode episode = make_episode(clip, subject, kind, config.clip_length, config.negative_prob, rng);
          Graph g;
          Decisions decisions;
          const LossTerms terms = episode_terms(g, model, episode, options, decisions);
          const TotalLoss loss = total_loss(g, terms, config.weights);
          g.backward(loss.total);
          matched += terms.matched;
          const auto& b = loss.breakdown;
          sum.bce += b.bce, sum.dice += b.dice, sum.iou += b.iou, sum.l2 += b.l2;
          sum.sub += b.sub, sum.obj += b.obj, sum.rel += b.rel, sum.total += b.total;
        }
        if (!gradients_finite(model)) throw NumericalError("non-finite gradient");
      } catch (const NumericalError& e) {
        restore(model, last_good);
        save(epoch - 1);
        result.diverged = true;
        result.divergence = e.what();
        log({{"step", result.steps}, {"epoch", epoch}, {"diverged", e.what()}});
        return result;
      }
      const double n = static_cast<double>(stop - start);
      for (double* v : {&sum.bce, &sum.dice, &sum.iou, &sum.l2, &sum.sub, &sum.obj, &sum.rel, &sum.total}) *v /= n;
      optimizer.step();
      ++result.steps;
      result.losses.push_back(sum.total);
      result.last = sum;
      log({{"step", result.steps},
           {"epoch", epoch},
           {"loss", sum.to_json()},
           {"matched", matched},
           {"lr",
            {{model::kSchGroup, optimizer.learning_rate(model::kSchGroup)},
             {model::kDidmGroup, optimizer.learning_rate(model::kDidmGroup)},
             {model::kBackboneGroup, optimizer.learning_rate(model::kBackboneGroup)}}}});
    }
    last_good = snapshot(model);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) save(epoch);
    if (config.eval_every > 0 && epoch % config.eval_every == 0 && outputs.evaluate)
      log({{"step", result.steps}, {"epoch", epoch}, {"eval", outputs.evaluate(model, epoch)}});
  }
  save(config.epochs);
  return result;
}

}  // namespace ivsg::train
