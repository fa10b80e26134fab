#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>

#include "banditmt/bandit_net.hpp"
#include "banditmt/bandit_rl.hpp"
#include "banditmt/bpe.hpp"
#include "banditmt/checkpoint.hpp"
#include "banditmt/codec.hpp"
#include "banditmt/config.hpp"
#include "banditmt/data_select.hpp"
#include "banditmt/metrics.hpp"
#include "banditmt/supervised.hpp"

namespace banditmt::cli {
namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<Sentence> read_tokenized(const std::string& path) {
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize(line));
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

std::optional<BpeModel> maybe_bpe(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return BpeModel::load(path);
}

std::vector<Sentence> segment_all(const std::optional<BpeModel>& bpe, const std::vector<Sentence>& lines) {
  if (!bpe) return lines;
  std::vector<Sentence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(apply_bpe(*bpe, l));
  return out;
}

struct Globals {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string profile;

  PipelineConfig config() const {
    std::optional<Profile> p;
    if (!profile.empty()) p = parse_profile(profile);
    if (config_path.empty()) return parse_config("", p);
    return load_config(config_path, p);
  }
};

int bpe_learn(const Globals& g, const std::vector<std::string>& inputs, std::optional<std::size_t> merges,
              const std::string& out_path, std::ostream& out) {
  const PipelineConfig cfg = g.config();
  std::vector<Sentence> corpus;
  for (const auto& path : inputs) {
    std::vector<Sentence> lines = read_tokenized(path);
    corpus.insert(corpus.end(), lines.begin(), lines.end());
  }
  if (corpus.empty()) throw std::runtime_error("bpe-learn: no input lines");
  const BpeModel model = learn_bpe(corpus, merges.value_or(cfg.train.bpe_merges));
  model.save(out_path);
  out << "learned " << model.merges().size() << " merges\n";
  return 0;
}

int bpe_apply(const std::string& merges, const std::string& input, const std::string& out_path) {
  const BpeModel model = BpeModel::load(merges);
  std::vector<std::string> lines;
  for (const auto& l : read_tokenized(input)) {
    const Sentence units = apply_bpe(model, l);
    lines.push_back(join(units));
  }
  write_lines(out_path, lines);
  return 0;
}

int bpe_restore(const std::string& input, const std::string& out_path, std::ostream& err) {
  std::vector<std::string> lines;
  std::size_t lineno = 0;
  for (const auto& l : read_tokenized(input)) {
    ++lineno;
    std::vector<std::string> warnings;
    const Sentence words = restore_words(l, &warnings);
    for (const auto& w : warnings) err << "warning: line " << lineno << ": " << w << '\n';
    lines.push_back(join(words));
  }
  write_lines(out_path, lines);
  return 0;
}

int select_data_cmd(const Globals& g, const std::string& in_domain, const std::string& src, const std::string& tgt,
                    std::optional<double> fraction, std::optional<std::size_t> cap, const std::string& prefix,
                    std::ostream& out) {
  PipelineConfig cfg = g.config();
  if (fraction) cfg.select.fraction = *fraction;
  if (cap) cfg.select.in_domain_cap = *cap;
  cfg.validate();
  const std::vector<Sentence> in_lines = read_tokenized(in_domain);
  const std::vector<std::string> src_raw = read_lines(src);
  const std::vector<std::string> tgt_raw = read_lines(tgt);
  if (src_raw.size() != tgt_raw.size()) throw std::runtime_error("select-data: source and target line counts differ");
  std::vector<Sentence> sources;
  for (const auto& l : src_raw) sources.push_back(tokenize(l));
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (sources[i].empty()) throw std::runtime_error("select-data: empty source line " + std::to_string(i + 1));

  const Selection sel = select_data(in_lines, sources, cfg.select);
  std::vector<std::string> sel_src, sel_tgt;
  for (std::size_t k = 0; k < sel.selected; ++k) {
    sel_src.push_back(src_raw[sel.ranking[k].index]);
    sel_tgt.push_back(tgt_raw[sel.ranking[k].index]);
  }
  write_lines(prefix + ".src", sel_src);
  write_lines(prefix + ".tgt", sel_tgt);
  std::ofstream scores(prefix + ".scores.csv");
  if (!scores) throw std::runtime_error("cannot write " + prefix + ".scores.csv");
  scores << "index,score\n" << std::setprecision(17);
  for (const auto& s : sel.ranking) scores << s.index << ',' << s.score << '\n';
  out << "selected " << sel.selected << " of " << sources.size() << " pairs\n";
  return 0;
}

int train_cmd(const Globals& g, const std::string& src, const std::string& tgt, const std::string& bpe_path,
              const std::string& heldout_src, const std::string& heldout_tgt, const std::string& ckpt,
              const std::string& metrics_path, std::ostream& out) {
  const PipelineConfig cfg = g.config();
  const std::optional<BpeModel> bpe = maybe_bpe(bpe_path);
  const std::vector<Sentence> s = segment_all(bpe, read_tokenized(src));
  const std::vector<Sentence> t = segment_all(bpe, read_tokenized(tgt));
  const Vocabulary sv = Vocabulary::build(s);
  const Vocabulary tv = Vocabulary::build(t);
  const ParallelCorpus corpus = ParallelCorpus::from_text(s, t, sv, tv);
  ParallelCorpus heldout;
  if (!heldout_src.empty() != !heldout_tgt.empty())
    throw std::runtime_error("train: --heldout-src and --heldout-tgt go together");
  if (!heldout_src.empty()) {
    const std::vector<Sentence> hs = segment_all(bpe, read_tokenized(heldout_src));
    const std::vector<Sentence> ht = segment_all(bpe, read_tokenized(heldout_tgt));
    heldout = ParallelCorpus::from_text(hs, ht, sv, tv);
  }
  const ModelDims dims = cfg.train.dims_for(sv.size(), tv.size());
  TrainResult result = train_supervised(corpus, dims, cfg.train, g.seed, heldout, [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " lr " << m.learning_rate << " train_ppl " << m.train_ppl << " heldout_ppl "
        << m.heldout_ppl << '\n';
  });
  save_checkpoint(ckpt, result.params, sv, tv);
  if (!metrics_path.empty()) write_metrics_csv(metrics_path, result.metrics);
  return 0;
}

int serve_cmd(const Globals& g, const std::string& src, const std::string& ref, const std::string& addr,
              const std::string& log_dir, std::size_t max_sessions, std::ostream& out) {
  const PipelineConfig cfg = g.config();
  const auto [host, port] = parse_address(addr.empty() ? cfg.server_address : addr);
  ServerConfig sc;
  sc.host = host;
  sc.port = port;
  sc.window = cfg.server_window;
  sc.max_sessions = max_sessions;
  if (!log_dir.empty()) sc.log_dir = log_dir;
  BanditServer server(read_tokenized(src), read_tokenized(ref), sc);
  server.start();
  out << "listening on " << host << ':' << server.port() << std::endl;
  server.wait();
  for (const auto& s : server.summaries())
    out << "session " << s.session << ": " << s.sources_sent << " sources, " << s.rewards_sent << " rewards, "
        << s.errors << " errors\n";
  return 0;
}

struct BanditArgs {
  std::string ckpt;
  std::string critic = "none";
  std::string addr;
  std::string bpe;
  std::string out_ckpt;
  std::string log;
  std::string pretrain_triples;
  std::string critic_out;
  std::size_t limit = 0;
  bool reverse = false;
};

int bandit_cmd(const Globals& g, const BanditArgs& a, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = g.config();
  if (cfg.a2c.batch_size > cfg.server_window)
    throw std::runtime_error("a2c.batch_size must not exceed server.window");
  Checkpoint policy_ckpt = load_checkpoint(a.ckpt);
  NmtParams policy = policy_ckpt.policy();
  const TextCodec codec(policy_ckpt.source_vocab, policy_ckpt.target_vocab, maybe_bpe(a.bpe));

  CriticParams critic = a.critic == "none" ? CriticParams::initialized(policy.dims(), g.seed ^ 0xC0FFEEULL)
                                            : load_checkpoint(a.critic).critic();
  if (critic.dims() != policy.dims()) throw std::runtime_error("critic and policy dimensions differ");
  if (!a.pretrain_triples.empty()) {
    std::vector<TripleRecord> records = read_triples_csv(a.pretrain_triples);
    if (records.size() > cfg.a2c.pretrain_triples) records.resize(cfg.a2c.pretrain_triples);
    const std::vector<RewardTriple> triples = encode_triples(records, codec);
    const PretrainReport rep = pretrain_critic(critic, triples, cfg.a2c, g.seed);
    out << "critic pretrain on " << rep.train_size << " triples (" << a.pretrain_triples << "): heldout mse "
        << rep.heldout_mse << " vs zero predictor " << rep.zero_predictor_mse << '\n';
  }

  const auto [host, port] = parse_address(a.addr.empty() ? cfg.server_address : a.addr);
  NetworkFeedback channel(host, port);
  A2cLearner learner(policy, critic, cfg.a2c, g.seed);
  BanditLoopOptions opts;
  opts.limit = a.limit;
  opts.reverse_submission = a.reverse;
  opts.on_error = [&](const std::string& e) { err << "protocol error: " << e << '\n'; };
  BanditLog log;
  int status = 0;
  try {
    log = run_bandit_loop(learner, channel, codec, opts);
  } catch (const std::exception& e) {
    err << "bandit loop aborted: " << e.what() << '\n';
    status = 1;
  }
  channel.close();
  if (!a.log.empty()) {
    std::vector<TripleRecord> partial = log.triples;
    write_triples_csv(a.log, partial);
  }
  save_checkpoint(a.out_ckpt, policy, codec.source_vocab(), codec.target_vocab());
  if (!a.critic_out.empty()) save_checkpoint(a.critic_out, critic, codec.source_vocab(), codec.target_vocab());
  Real mean = 0.0;
  for (Real r : log.rewards) mean += r;
  if (!log.rewards.empty()) mean /= static_cast<Real>(log.rewards.size());
  out << "bandit-train: " << log.rewards.size() << " rewards, " << log.actor_updates << " updates, mean reward "
      << mean << '\n';
  return status;
}

struct ClientArgs {
  std::string mode;
  std::string addr;
  std::string ckpt;
  std::string bpe;
  std::string out;
  std::string log;
  std::size_t beam = 1;
  std::size_t limit = 0;
  BanditArgs bandit;
};

int client_cmd(const Globals& g, ClientArgs a, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = g.config();
  if (a.mode == "a2c") {
    a.bandit.addr = a.addr;
    a.bandit.ckpt = a.ckpt;
    a.bandit.bpe = a.bpe;
    a.bandit.log = a.log;
    a.bandit.limit = a.limit;
    if (a.bandit.ckpt.empty() || a.bandit.out_ckpt.empty())
      throw CLI::RequiredError("--ckpt and --out-ckpt");
    return bandit_cmd(g, a.bandit, out, err);
  }
  const auto [host, port] = parse_address(a.addr.empty() ? cfg.server_address : a.addr);
  NetworkFeedback channel(host, port);
  ClientLog log;
  int status = 0;
  try {
    if (a.mode == "static") {
      if (a.ckpt.empty()) throw CLI::RequiredError("--ckpt");
      const Checkpoint ck = load_checkpoint(a.ckpt);
      const TextCodec codec(ck.source_vocab, ck.target_vocab, maybe_bpe(a.bpe));
      DecodeConfig dc = cfg.decode;
      dc.mode = a.beam > 1 ? DecodeMode::kBeam : DecodeMode::kGreedy;
      dc.beam_width = a.beam;
      dc.seed = g.seed;
      log = run_static_client(channel, ck.policy(), codec, dc, a.limit);
    } else {
      log = run_log_sources_client(channel, a.limit);
    }
  } catch (const CLI::Error&) {
    throw;
  } catch (const std::exception& e) {
    err << "client aborted: " << e.what() << '\n';
    status = 1;
  }
  for (const auto& e : log.errors) err << "server error: " << e << '\n';
  if (!a.out.empty()) {
    std::vector<std::string> lines;
    if (a.mode == "static")
      for (const auto& t : log.triples) lines.push_back(t.hypothesis);
    else
      lines = log.sources;
    write_lines(a.out, lines);
  }
  if (!a.log.empty()) write_triples_csv(a.log, log.triples);
  Real mean = 0.0;
  for (const auto& t : log.triples) mean += t.reward;
  if (!log.triples.empty()) mean /= static_cast<Real>(log.triples.size());
  out << "client: " << log.triples.size() << " rewards, mean " << mean << '\n';
  return status;
}

int evaluate_cmd(const std::string& hyp, const std::string& ref, std::size_t window, const std::string& csv,
                 std::ostream& out) {
  const std::vector<Sentence> h = read_tokenized(hyp);
  const std::vector<Sentence> r = read_tokenized(ref);
  const Real bleu = corpus_bleu(h, r);
  out << "BLEU " << std::fixed << std::setprecision(2) << bleu << '\n' << std::defaultfloat;
  if (window > 0) {
    std::vector<Real> scores;
    for (std::size_t i = 0; i < h.size(); ++i) scores.push_back(sentence_reward(h[i], r[i]));
    const std::vector<WindowMean> w = windowed_means(scores, window);
    std::ostream* sink = &out;
    std::ofstream file;
    if (!csv.empty()) {
      file.open(csv);
      if (!file) throw std::runtime_error("cannot write " + csv);
      sink = &file;
    }
    *sink << "window_index,mean,count\n" << std::setprecision(10);
    for (const auto& m : w) *sink << m.index << ',' << m.mean << ',' << m.count << '\n';
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"banditmt: bandit-feedback machine translation workbench", "banditmt"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
  app.add_option("--profile", g.profile, "paper-defaults or desk-scale")
      ->check(CLI::IsMember({"paper-defaults", "desk-scale"}));

  std::function<int()> action;

  auto* learn = app.add_subcommand("bpe-learn", "Learn a joint BPE merge table");
  std::vector<std::string> learn_inputs;
  std::optional<std::size_t> learn_merges;
  std::string learn_out;
  learn->add_option("--input", learn_inputs, "Training text (repeatable)")->required()->check(CLI::ExistingFile);
  learn->add_option("--merges", learn_merges, "Number of merges (default: train.bpe_merges)");
  learn->add_option("--out", learn_out, "Merges file")->required();
  learn->callback([&] { action = [&] { return bpe_learn(g, learn_inputs, learn_merges, learn_out, out); }; });

  auto* apply = app.add_subcommand("bpe-apply", "Segment text into subword units");
  std::string apply_merges, apply_in, apply_out;
  apply->add_option("--merges", apply_merges)->required()->check(CLI::ExistingFile);
  apply->add_option("--input", apply_in)->required()->check(CLI::ExistingFile);
  apply->add_option("--out", apply_out)->required();
  apply->callback([&] { action = [&] { return bpe_apply(apply_merges, apply_in, apply_out); }; });

  auto* restore = app.add_subcommand("bpe-restore", "Join subword units back into words");
  std::string restore_in, restore_out;
  restore->add_option("--input", restore_in)->required()->check(CLI::ExistingFile);
  restore->add_option("--out", restore_out)->required();
  restore->callback([&] { action = [&] { return bpe_restore(restore_in, restore_out, err); }; });

  auto* sel = app.add_subcommand("select-data", "Moore-Lewis selection of out-of-domain pairs");
  std::string sel_in, sel_src, sel_tgt, sel_prefix;
  std::optional<double> sel_fraction;
  std::optional<std::size_t> sel_cap;
  sel->add_option("--in-domain", sel_in)->required()->check(CLI::ExistingFile);
  sel->add_option("--out-domain-src", sel_src)->required()->check(CLI::ExistingFile);
  sel->add_option("--out-domain-tgt", sel_tgt)->required()->check(CLI::ExistingFile);
  sel->add_option("--fraction", sel_fraction, "Fraction of pairs to keep (default: select.fraction)");
  sel->add_option("--cap", sel_cap, "In-domain lines used for the in-domain LM (default: select.in_domain_cap)");
  sel->add_option("--out-prefix", sel_prefix)->required();
  sel->callback([&] {
    action = [&] { return select_data_cmd(g, sel_in, sel_src, sel_tgt, sel_fraction, sel_cap, sel_prefix, out); };
  });

  auto* train = app.add_subcommand("train", "Supervised training of the translation model");
  std::string tr_src, tr_tgt, tr_bpe, tr_hsrc, tr_htgt, tr_out, tr_metrics;
  std::vector<std::string> tr_pair;
  auto* tr_train = train->add_option("--train", tr_pair, "Source and target files as src,tgt")
                       ->delimiter(',')
                       ->expected(2)
                       ->check(CLI::ExistingFile);
  train->add_option("--src", tr_src)->check(CLI::ExistingFile)->excludes(tr_train);
  train->add_option("--tgt", tr_tgt)->check(CLI::ExistingFile)->excludes(tr_train);
  train->add_option("--bpe", tr_bpe, "Merges file applied to both sides")->check(CLI::ExistingFile);
  train->add_option("--heldout-src", tr_hsrc)->check(CLI::ExistingFile);
  train->add_option("--heldout-tgt", tr_htgt)->check(CLI::ExistingFile);
  train->add_option("--out", tr_out, "Checkpoint")->required();
  train->add_option("--metrics", tr_metrics, "Per-epoch CSV");
  train->callback([&] {
    if (tr_pair.size() == 2) {
      tr_src = tr_pair[0];
      tr_tgt = tr_pair[1];
    }
    if (tr_src.empty() || tr_tgt.empty()) throw CLI::RequiredError("--train (or --src and --tgt)");
    action = [&] { return train_cmd(g, tr_src, tr_tgt, tr_bpe, tr_hsrc, tr_htgt, tr_out, tr_metrics, out); };
  });

  auto* serve = app.add_subcommand("serve-bandit", "Serve sources and rewards over TCP");
  std::string sv_src, sv_ref, sv_addr, sv_log;
  std::size_t sv_max = 0;
  serve->add_option("--src", sv_src)->required()->check(CLI::ExistingFile);
  serve->add_option("--ref", sv_ref)->required()->check(CLI::ExistingFile);
  serve->add_option("--addr", sv_addr, "host:port (default: server.address)");
  serve->add_option("--log", sv_log, "Session log directory");
  serve->add_option("--max-sessions", sv_max, "Exit after this many sessions (0 = run forever)");
  serve->callback([&] { action = [&] { return serve_cmd(g, sv_src, sv_ref, sv_addr, sv_log, sv_max, out); }; });

  auto* client = app.add_subcommand("client", "Connect to a bandit server");
  ClientArgs ca;
  client->add_option("--mode", ca.mode)->required()->check(CLI::IsMember({"static", "a2c", "log-sources"}));
  client->add_option("--addr", ca.addr, "host:port (default: server.address)");
  client->add_option("--ckpt", ca.ckpt)->check(CLI::ExistingFile);
  client->add_option("--bpe", ca.bpe)->check(CLI::ExistingFile);
  client->add_option("--beam", ca.beam, "Beam width for static mode (1 = greedy)")->check(CLI::PositiveNumber);
  client->add_option("--out", ca.out, "Translations (static) or sources (log-sources)");
  client->add_option("--log", ca.log, "Triple log CSV");
  client->add_option("--limit", ca.limit, "Stop after this many sentences");
  client->add_option("--critic", ca.bandit.critic, "a2c mode: critic checkpoint or none");
  client->add_option("--out-ckpt", ca.bandit.out_ckpt, "a2c mode: adapted checkpoint");
  client->add_option("--pretrain-triples", ca.bandit.pretrain_triples)->check(CLI::ExistingFile);
  client->callback([&] { action = [&] { return client_cmd(g, ca, out, err); }; });

  auto* bandit = app.add_subcommand("bandit-train", "Adapt a model with actor-critic from server rewards");
  BanditArgs ba;
  bandit->add_option("--ckpt", ba.ckpt)->required()->check(CLI::ExistingFile);
  bandit->add_option("--critic", ba.critic, "Critic checkpoint, or none");
  bandit->add_option("--server", ba.addr, "host:port (default: server.address)");
  bandit->add_option("--bpe", ba.bpe)->check(CLI::ExistingFile);
  bandit->add_option("--out", ba.out_ckpt)->required();
  bandit->add_option("--log", ba.log, "Triple log CSV");
  bandit->add_option("--pretrain-triples", ba.pretrain_triples, "Triple CSV for critic pretraining")
      ->check(CLI::ExistingFile);
  bandit->add_option("--critic-out", ba.critic_out, "Write the final critic here");
  bandit->add_option("--limit", ba.limit, "Stop after this many sentences");
  bandit->add_flag("--reverse-submission", ba.reverse, "Submit each batch in descending id order");
  bandit->callback([&] { action = [&] { return bandit_cmd(g, ba, out, err); }; });

  auto* eval = app.add_subcommand("evaluate", "Corpus BLEU and windowed sentence rewards");
  std::string ev_hyp, ev_ref, ev_csv;
  std::size_t ev_window = 0;
  eval->add_option("--hyp", ev_hyp)->required()->check(CLI::ExistingFile);
  eval->add_option("--ref", ev_ref)->required()->check(CLI::ExistingFile);
  eval->add_option("--window", ev_window, "Window size for windowed means");
  eval->add_option("--csv", ev_csv, "Write windowed means here instead of stdout");
  eval->callback([&] { action = [&] { return evaluate_cmd(ev_hyp, ev_ref, ev_window, ev_csv, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    return action();
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace banditmt::cli
