#pragma once

// Loaded classification models (time series and audio) plus the training
// entry points shared by the CLI and retrain jobs.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "itsgw/audio/features.hpp"
#include "itsgw/audio/wav.hpp"
#include "itsgw/model/checkpoint.hpp"
#include "itsgw/model/train.hpp"
#include "itsgw/text/dataset.hpp"

namespace itsgw::gateway {

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto at = s.find(sep, pos);
    out.emplace_back(s.substr(pos, at == std::string_view::npos ? std::string_view::npos : at - pos));
    if (at == std::string_view::npos) break;
    pos = at + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// "task=classification" / "classes=normal,warning,fault", one per line.
inline LabelSchema parse_label_schema(std::string_view text) {
  LabelSchema schema;
  bool have_classes = false;
  for (const auto& raw : split(text, '\n')) {
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::invalid_config, "label schema line without '=': " + line);
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "task") {
      if (value == "classification")
        schema.task_kind = TaskKind::classification;
      else if (value == "captioning")
        schema.task_kind = TaskKind::captioning;
      else
        fail(errc::invalid_config, "unknown task '" + value + "'");
    } else if (key == "classes") {
      have_classes = true;
      schema.class_names.clear();
      if (!value.empty())
        for (const auto& c : split(value, ',')) schema.class_names.push_back(trim(c));
    } else {
      fail(errc::invalid_config, "unknown label schema key '" + key + "'");
    }
  }
  if (!have_classes && schema.task_kind == TaskKind::classification) fail(errc::invalid_config, "label schema lacks classes=");
  schema.check();
  return schema;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LabelSchema load_label_schema(const std::string& path) { return parse_label_schema(read_text_file(path)); }

/// "path,label" per line; relative paths resolve against the manifest's directory.
inline std::vector<AudioClip> load_audio_manifest(const std::string& path, const LabelSchema& labels) {
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<AudioClip> clips;
  for (const auto& raw : split(read_text_file(path), '\n')) {
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) fail(errc::schema_mismatch, "manifest line lacks a label: " + line);
    std::filesystem::path wav = trim(line.substr(0, comma));
    if (wav.is_relative()) wav = base / wav;
    auto clip = audio::load_wav_file(wav.string());
    clip.label = text::parse_label(trim(line.substr(comma + 1)), labels);
    clips.push_back(std::move(clip));
  }
  if (clips.empty()) fail(errc::empty_dataset, "manifest " + path + " lists no clips");
  return clips;
}

/// Log-spectrogram frames beyond max_len are dropped.
inline model::ModelInput audio_input(const AudioClip& clip, std::size_t max_len) {
  auto seq = audio::clip_features(clip);
  const std::size_t t = std::min(seq.length(), max_len);
  nn::Tensor2D frames(t, seq.frames.cols());
  std::copy_n(seq.frames.data().begin(), t * seq.frames.cols(), frames.data().begin());
  return {{}, std::move(frames), std::vector<std::uint8_t>(t, 1)};
}

inline std::string encode_fields(const std::vector<FieldSpec>& fields) {
  std::vector<std::string> parts;
  for (const auto& f : fields) parts.push_back(f.name + ":" + (f.kind == FieldKind::numeric ? "numeric" : "categorical"));
  return join(parts, ';');
}

inline std::vector<FieldSpec> decode_fields(std::string_view s) {
  std::vector<FieldSpec> out;
  for (const auto& part : split(s, ';')) {
    const auto colon = part.rfind(':');
    if (colon == std::string::npos) fail(errc::invalid_config, "bad field spec '" + part + "'");
    const auto kind = part.substr(colon + 1);
    if (kind != "numeric" && kind != "categorical") fail(errc::invalid_config, "bad field kind '" + kind + "'");
    out.push_back({part.substr(0, colon), kind == "numeric" ? FieldKind::numeric : FieldKind::categorical});
  }
  return out;
}

inline std::string vocab_path_for(const std::string& ckpt_path) { return ckpt_path + ".vocab"; }

/// Frozen model plus everything needed to turn a payload into its input.
struct Classifier {
  Modality modality = Modality::time_series;
  model::EncoderModel model{model::EncoderConfig{.vocab_size = 8}};
  text::Vocab vocab;          // time series only
  RecordSchema record_schema;  // time series only
  LabelSchema labels;
  std::optional<double> eval_accuracy;

  model::ModelInput to_input(const ModalityInput& input) const {
    if (modality_of(input) != modality) fail(errc::invalid_argument, "payload modality does not match the model");
    if (modality == Modality::time_series) {
      const auto& rec = std::get<SensorRecord>(input);
      validate_record(record_schema, rec);
      return text::record_input(rec, vocab, model.config().max_len);
    }
    return audio_input(std::get<AudioClip>(input), model.config().max_len);
  }

  ClassificationResult classify(const ModalityInput& input) const {
    const auto p = model::softmax(model::forward_classify(model, to_input(input)));
    const auto k = model::argmax(p);
    return {k, labels.class_names.at(k), p};
  }

  std::map<std::string, std::string> meta() const {
    std::map<std::string, std::string> m{{"modality", std::string(to_string(modality))}, {"classes", join(labels.class_names, ',')}};
    if (modality == Modality::time_series) m["fields"] = encode_fields(record_schema.fields);
    if (eval_accuracy) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", *eval_accuracy);  // round-trips exactly
      m["eval_accuracy"] = buf;
    }
    return m;
  }
};

inline void save_classifier(const Classifier& c, const std::string& path) {
  model::save_checkpoint(path, c.model, c.meta());
  if (c.modality == Modality::time_series) c.vocab.save(vocab_path_for(path));
}

inline std::shared_ptr<const Classifier> load_classifier(const std::string& path) {
  auto ckpt = model::load_checkpoint(path);
  auto out = std::make_shared<Classifier>();
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) fail(errc::invalid_config, path + " lacks meta key '" + k + "'");
    return it->second;
  };
  out->modality = parse_modality(get("modality"));
  if (out->modality == Modality::video) fail(errc::invalid_config, "video has no classifier checkpoint");
  out->labels.class_names = split(get("classes"), ',');
  out->labels.check();
  if (out->labels.size() != ckpt.model.config().n_classes) fail(errc::invalid_config, path + ": class list does not match n_classes");
  if (auto it = ckpt.meta.find("eval_accuracy"); it != ckpt.meta.end()) out->eval_accuracy = std::stod(it->second);
  if (out->modality == Modality::time_series) {
    out->record_schema = {decode_fields(get("fields")), out->labels.size()};
    out->vocab = text::Vocab::load(vocab_path_for(path));
    if (out->vocab.size() != ckpt.model.config().vocab_size) fail(errc::invalid_config, "vocab size does not match " + path);
  }
  out->model = std::move(ckpt.model);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainSpec {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t max_len = 16;
  std::size_t max_steps = 300;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double weight_decay = 0.01;
  double eval_fraction = 0.2;
  std::size_t vocab_max = 4096;
  std::uint64_t seed = 1;
};

struct LabeledSet {
  std::vector<model::LabeledInput> train, eval;
};

/// Seeded shuffle, then the last eval_fraction becomes the held-out split.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_holdout(std::vector<T> items, double eval_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  auto n_eval = static_cast<std::size_t>(static_cast<double>(items.size()) * eval_fraction);
  if (eval_fraction > 0.0 && n_eval == 0 && items.size() > 1) n_eval = 1;
  std::vector<T> eval(items.end() - static_cast<std::ptrdiff_t>(n_eval), items.end());
  items.resize(items.size() - n_eval);
  return {std::move(items), std::move(eval)};
}

struct TrainOutcome {
  std::shared_ptr<const Classifier> classifier;
  model::TrainLog log;
};

namespace detail {

inline TrainOutcome fit(std::shared_ptr<Classifier> c, const LabeledSet& data, const TrainSpec& spec) {
  if (data.train.empty()) fail(errc::empty_dataset, "no training items after the holdout split");
  model::AdamW opt(c->model.parameters(), {spec.lr, 0.9, 0.999, 1e-8, spec.weight_decay});
  model::TrainOptions options{spec.epochs, spec.batch_size, spec.max_steps, spec.seed};
  TrainOutcome out;
  out.log = model::train(c->model, data.train, data.eval, options, opt);
  c->eval_accuracy = model::evaluate_accuracy(c->model, data.eval.empty() ? data.train : data.eval);
  out.classifier = std::move(c);
  return out;
}

inline LabeledSet tabular_set(const std::vector<SensorRecord>& records, const Classifier& c, const TrainSpec& spec) {
  auto [tr, ev] = split_holdout(records, spec.eval_fraction, spec.seed);
  return {text::encode_labeled(tr, c.vocab, c.model.config().max_len), text::encode_labeled(ev, c.vocab, c.model.config().max_len)};
}

inline LabeledSet audio_set(const std::vector<AudioClip>& clips, const Classifier& c, const TrainSpec& spec) {
  auto [tr, ev] = split_holdout(clips, spec.eval_fraction, spec.seed);
  LabeledSet set;
  for (const auto& clip : tr) set.train.push_back({audio_input(clip, c.model.config().max_len), *clip.label});
  for (const auto& clip : ev) set.eval.push_back({audio_input(clip, c.model.config().max_len), *clip.label});
  return set;
}

}  // namespace detail

/// Trains a fresh classifier from a CSV (time series) or a WAV manifest (audio).
inline TrainOutcome train_classifier(Modality modality, const std::string& data_path, const LabelSchema& labels, const TrainSpec& spec) {
  labels.check();
  if (labels.task_kind != TaskKind::classification) fail(errc::invalid_config, "training needs a classification schema");
  auto c = std::make_shared<Classifier>();
  c->modality = modality;
  c->labels = labels;
  model::EncoderConfig cfg;
  cfg.layers = spec.layers;
  cfg.heads = spec.heads;
  cfg.d_model = spec.d_model;
  cfg.d_ff = spec.d_ff;
  cfg.max_len = spec.max_len;
  cfg.n_classes = labels.size();
  cfg.seed = spec.seed;
  if (modality == Modality::time_series) {
    const auto ds = text::load_tabular_csv(data_path, labels);
    c->record_schema = ds.schema;
    auto [tr, ev] = split_holdout(ds.records, spec.eval_fraction, spec.seed);
    c->vocab = text::build_vocab(text::record_corpus(tr), 1, spec.vocab_max);
    cfg.mode = model::InputMode::token_input;
    cfg.vocab_size = c->vocab.size();
    c->model = model::EncoderModel(cfg);
    return detail::fit(c, detail::tabular_set(ds.records, *c, spec), spec);
  }
  if (modality == Modality::audio) {
    const auto clips = load_audio_manifest(data_path, labels);
    cfg.mode = model::InputMode::feature_input;
    cfg.feature_dim = audio::kFeatureDim;
    c->model = model::EncoderModel(cfg);
    return detail::fit(c, detail::audio_set(clips, *c, spec), spec);
  }
  fail(errc::invalid_argument, "video has no trainable classifier; captioning uses the caption chain");
}

/// Continues training a copy of `base` on new labeled data; architecture,
/// vocabulary and labels are kept.
inline TrainOutcome fine_tune(const Classifier& base, const std::string& data_path, const TrainSpec& spec) {
  auto c = std::make_shared<Classifier>(base);
  if (base.modality == Modality::time_series) {
    const auto ds = text::load_tabular_csv(data_path, base.labels);
    for (const auto& r : ds.records) validate_record(base.record_schema, r);
    return detail::fit(c, detail::tabular_set(ds.records, *c, spec), spec);
  }
  return detail::fit(c, detail::audio_set(load_audio_manifest(data_path, base.labels), *c, spec), spec);
}

/// Accuracy of a loaded classifier on a labeled data file.
inline double evaluate_file(const Classifier& c, const std::string& data_path) {
  std::vector<model::LabeledInput> items;
  if (c.modality == Modality::time_series) {
    const auto ds = text::load_tabular_csv(data_path, c.labels);
    for (const auto& r : ds.records) {
      validate_record(c.record_schema, r);
      if (!r.label) fail(errc::label_out_of_range, "evaluation record has no label");
      items.push_back({c.to_input(r), *r.label});
    }
  } else {
    for (const auto& clip : load_audio_manifest(data_path, c.labels)) items.push_back({c.to_input(clip), *clip.label});
  }
  return model::evaluate_accuracy(c.model, items);
}

}  // namespace itsgw::gateway
