#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "itsgw/gateway/http.hpp"
#include "itsgw/gateway/profile.hpp"
#include "itsgw/visual/conformance.hpp"

using namespace itsgw;
using namespace itsgw::gateway;

namespace {

LabelSchema labels_from(const std::string& arg) {
  if (arg.empty()) return LabelSchema::demo();
  if (std::filesystem::exists(arg)) return load_label_schema(arg);
  return parse_label_schema("classes=" + arg);
}

int serve(const std::string& config_path) {
  // Block SIGINT/SIGTERM before any thread starts so only the waiter sees them.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  const auto cfg = load_config(config_path);
  Gateway gw(cfg);
  gw.start();
  if (const auto& r = gw.recovered(); !r.order.empty())
    std::cerr << "replayed " << r.order.size() << " jobs from " << cfg.job_log_path << ", " << r.interrupted.size() << " interrupted\n";

  httplib::Server srv;
  mount_routes(srv, gw);
  const auto [host, port] = parse_bind(cfg.http_bind);
  if (!srv.bind_to_port(host, port)) fail(errc::io_error, "cannot bind " + cfg.http_bind);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    srv.stop();
  });
  std::cerr << "listening on " << host << ":" << port << " with " << gw.worker_count() << " workers\n";
  srv.listen_after_bind();
  // A no-op if the waiter already fired; otherwise listen failed and the waiter still blocks.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  gw.stop();
  return 0;
}

int train(Modality m, const std::string& data, const std::string& out, const std::string& labels, const TrainSpec& spec) {
  if (m == Modality::video) fail(errc::invalid_argument, "video has no trainable classifier");
  const auto outcome = train_classifier(m, data, labels_from(labels), spec);
  save_classifier(*outcome.classifier, out);
  const auto& losses = outcome.log.step_loss;
  if (!losses.empty()) std::printf("steps %zu  first loss %.4f  last loss %.4f\n", losses.size(), losses.front(), losses.back());
  if (const auto acc = outcome.classifier->eval_accuracy)
    std::printf("eval accuracy %.4f\n", *acc);
  else
    std::printf("no held-out split; eval accuracy not measured\n");
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int eval(const std::string& ckpt, const std::string& data) {
  const auto c = load_classifier(ckpt);
  std::printf("%s accuracy %.4f\n", std::string(to_string(c->modality)).c_str(), evaluate_file(*c, data));
  return 0;
}

int caption(const std::string& dir, const std::string& backend, const std::string& tcp, const std::string& task, std::size_t stride,
            std::size_t max_frames, std::size_t timeout_ms, bool no_fallback) {
  const auto seq = visual::load_frame_dir(dir);
  std::unique_ptr<visual::Captioner> cap;
  if (backend.empty() && tcp.empty())
    cap = std::make_unique<visual::BuiltinCaptioner>();
  else
    cap = std::make_unique<visual::BackendClient>(visual::BackendEndpoint{backend, tcp}, std::chrono::milliseconds(timeout_ms));
  visual::ChainOptions opt;
  opt.task = parse_refine_task(task);
  opt.stride = stride;
  opt.max_frames = max_frames;
  opt.fallback_to_builtin = !no_fallback;
  std::cout << to_json(visual::run_caption_chain(seq, *cap, opt)).dump(2) << "\n";
  return 0;
}

int profile(const std::string& config_path, bool header) {
  const auto rows = run_profile(load_config(config_path));
  if (header) std::cout << "Modality\tAccuracy\tMAC (GOP)\tTask\tLatency (ms)\n";
  std::cout << format_report(rows);
  return 0;
}

int tokenize(const std::string& input, const std::string& vocab_path, std::size_t max_len) {
  // Without a vocabulary, one is built from the input itself.
  const auto vocab = vocab_path.empty() ? text::build_vocab({input}, 1, 1u << 20) : text::Vocab::load(vocab_path);
  const auto enc = text::encode(input, vocab, max_len);
  json toks = json::array();
  for (auto id : enc.ids) toks.push_back(vocab.token(id));
  std::cout << json{{"ids", enc.ids}, {"tokens", toks}, {"mask", enc.mask}}.dump() << "\n";
  return 0;
}

int backend_check(const std::string& backend, const std::string& tcp, std::size_t timeout_ms) {
  const auto report = visual::run_conformance({backend, tcp}, std::chrono::milliseconds(timeout_ms));
  for (const auto& c : report.checks)
    std::printf("%s %s%s%s\n", c.passed ? "ok  " : "FAIL", c.name.c_str(), c.detail.empty() ? "" : ": ", c.detail.c_str());
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"itsgw: multimodal classification and captioning gateway"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, labels, frames, backend, tcp, task = "summarize", text_in, vocab;
  std::string modality;
  std::size_t stride = 1, max_frames = 16, timeout_ms = 10000, max_len = text::kDefaultMaxLen;
  bool no_fallback = false, header = false;
  TrainSpec spec;

  auto* s_serve = app.add_subcommand("serve", "run the HTTP gateway");
  s_serve->add_option("--config", config)->required()->check(CLI::ExistingFile);

  auto* s_train = app.add_subcommand("train", "train a classifier checkpoint");
  s_train->add_option("--modality", modality, "time_series or audio")->required();
  s_train->add_option("--data", data, "CSV (time_series) or path,label manifest (audio)")->required()->check(CLI::ExistingFile);
  s_train->add_option("--out", out)->required();
  s_train->add_option("--labels", labels, "comma list or label schema file; default normal,warning,fault");
  s_train->add_option("--layers", spec.layers)->capture_default_str();
  s_train->add_option("--heads", spec.heads)->capture_default_str();
  s_train->add_option("--d-model", spec.d_model)->capture_default_str();
  s_train->add_option("--d-ff", spec.d_ff)->capture_default_str();
  s_train->add_option("--max-len", spec.max_len)->capture_default_str();
  s_train->add_option("--steps", spec.max_steps)->capture_default_str();
  s_train->add_option("--epochs", spec.epochs)->capture_default_str();
  s_train->add_option("--batch", spec.batch_size)->capture_default_str();
  s_train->add_option("--lr", spec.lr)->capture_default_str();
  s_train->add_option("--weight-decay", spec.weight_decay)->capture_default_str();
  s_train->add_option("--eval-fraction", spec.eval_fraction)->capture_default_str();
  s_train->add_option("--seed", spec.seed)->capture_default_str();

  auto* s_eval = app.add_subcommand("eval", "accuracy of a checkpoint on labeled data");
  s_eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  s_eval->add_option("--data", data)->required()->check(CLI::ExistingFile);

  auto* s_caption = app.add_subcommand("caption", "caption a directory of PGM frames");
  s_caption->add_option("--frames", frames)->required()->check(CLI::ExistingDirectory);
  auto* o_backend = s_caption->add_option("--backend", backend, "backend command line");
  s_caption->add_option("--backend-tcp", tcp, "backend host:port")->excludes(o_backend);
  s_caption->add_option("--task", task, "summarize, translate or answer")->capture_default_str();
  s_caption->add_option("--stride", stride)->capture_default_str()->check(CLI::PositiveNumber);
  s_caption->add_option("--max-frames", max_frames)->capture_default_str()->check(CLI::PositiveNumber);
  s_caption->add_option("--timeout-ms", timeout_ms)->capture_default_str()->check(CLI::PositiveNumber);
  s_caption->add_flag("--no-fallback", no_fallback, "fail instead of captioning locally when the backend is down");

  auto* s_profile = app.add_subcommand("profile", "print the metrics report");
  s_profile->add_option("--config", config)->required()->check(CLI::ExistingFile);
  s_profile->add_flag("--header", header);

  auto* s_tok = app.add_subcommand("tokenize", "show the token ids for a string");
  s_tok->add_option("--text", text_in)->required();
  s_tok->add_option("--vocab", vocab, "vocab file written next to a time_series checkpoint")->check(CLI::ExistingFile);
  s_tok->add_option("--max-len", max_len)->capture_default_str();

  auto* s_check = app.add_subcommand("backend-check", "run the wire-protocol conformance suite against a backend");
  auto* o_cb = s_check->add_option("--backend", backend);
  s_check->add_option("--backend-tcp", tcp)->excludes(o_cb);
  s_check->add_option("--timeout-ms", timeout_ms)->capture_default_str()->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_serve) return serve(config);
    if (*s_train) return train(parse_modality(modality), data, out, labels, spec);
    if (*s_eval) return eval(ckpt, data);
    if (*s_caption) return caption(frames, backend, tcp, task, stride, max_frames, timeout_ms, no_fallback);
    if (*s_profile) return profile(config, header);
    if (*s_tok) return tokenize(text_in, vocab, max_len);
    if (*s_check) {
      if (backend.empty() && tcp.empty()) fail(errc::invalid_argument, "give --backend or --backend-tcp");
      return backend_check(backend, tcp, timeout_ms);
    }
  } catch (const error& e) {
    std::cerr << "itsgw: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
