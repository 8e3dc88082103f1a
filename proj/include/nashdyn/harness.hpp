// Experiment runner: seeded trial loops over (game, method) pairs with
// divergence handling, periodic metric evaluation, cross-trial aggregation,
// and CSV emission.
//
// Determinism contract: every random draw is derived from (seed, trial) and
// the step index alone, so a rerun -- with any worker count -- produces
// byte-identical output.
#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "nashdyn/dynamics.hpp"
#include "nashdyn/eval.hpp"

namespace nashdyn {

// ---- configuration -----------------------------------------------------------

struct ExperimentConfig {
  std::string game = "saddle";
  std::string method = "sg";
  double eta = 1e-3;
  double gamma = 1e-1;
  long long steps = 10000;
  int trials = 64;
  std::uint64_t seed = 0;
  int batch_size = 64;
  int ensemble_size = 10;
  int brf_hidden = 32;
  long long eval_every = 10;
  std::string schedule = "constant";  // constant | harmonic
  double harmonic_c = 1.0;
  int eval_samples = 256;      // sample count for distribution metrics
  int eval_restarts = 8;       // approximate-exploitability search breadth
  int eval_inner_steps = 200;
  double eval_inner_lr = 1e-2;
  std::vector<std::string> metrics;  // empty: pick the game's natural metric
  std::string out;

  MethodConfig method_config() const {
    return MethodConfig{method, eta, gamma, ensemble_size, brf_hidden};
  }

  void validate() const {
    method_config().validate();
    require(steps >= 1, "config: steps must be >= 1");
    require(trials >= 1, "config: trials must be >= 1");
    require(eval_every >= 1, "config: eval_every must be >= 1");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(schedule == "constant" || schedule == "harmonic",
            "config: schedule must be constant or harmonic");
    require(harmonic_c > 0, "config: harmonic_c must be positive");
    require(eval_samples >= 1, "config: eval_samples must be >= 1");
    require(eval_restarts >= 1 && eval_inner_steps >= 0 && eval_inner_lr > 0,
            "config: bad evaluation inner loop");
  }
};

// Step size at step t (counted from 1). The harmonic schedule c/t satisfies
// the divergent-sum / square-summable conditions the subgradient analysis
// needs; constant reproduces the plain Euler discretization.
inline double schedule_step(const ExperimentConfig& cfg, long long t) {
  require(t >= 1, "schedule_step: steps count from 1");
  if (cfg.schedule == "harmonic") return cfg.harmonic_c / static_cast<double>(t);
  return cfg.eta;
}

// ---- records -------------------------------------------------------------------

struct TrialRecord {
  int trial = 0;  // -1 marks aggregate rows
  long long step = 0;
  std::string metric;
  double value = 0;
  bool diverged = false;

  bool operator==(const TrialRecord&) const = default;
};

inline std::vector<std::string> default_metrics(const Game& g) {
  if (g.nf || g.kuhn) return {"exploitability"};
  if (g.ne) return {"distance"};
  if (g.sample_data) return {"ewd"};
  if (g.id == "gg") return {"gg_ks"};
  return {"approx_exploitability"};
}

inline double eval_metric(const Game& g, const std::string& metric, const ParamVector& x,
                          const ExperimentConfig& cfg, Rng eval_rng) {
  if (metric == "distance") return distance_to_ne(g, x);
  if (metric == "exploitability") return exact_exploitability(g, x).phi;
  if (metric == "approx_exploitability")
    return approx_exploitability(g, x, cfg.eval_restarts, cfg.eval_inner_steps,
                                 cfg.eval_inner_lr, eval_rng)
        .phi;
  if (metric == "ewd") {
    require(static_cast<bool>(g.sample_data) && static_cast<bool>(g.sample_actions),
            "ewd metric: game has no data/generator samplers");
    Rng data_rng = eval_rng.fork(0);
    Rng gen_rng = eval_rng.fork(1);
    MatrixXd real = g.sample_data(cfg.eval_samples, data_rng);
    MatrixXd fake = g.sample_actions(0, x, cfg.eval_samples, gen_rng);
    return ewd(real, fake);
  }
  if (metric == "gg_ks") {
    require(static_cast<bool>(g.sample_actions), "gg_ks metric: game has no action sampler");
    double worst = 0;
    for (int i = 0; i < g.players; ++i) {
      Rng r = eval_rng.fork(i);
      MatrixXd s = g.sample_actions(i, x, cfg.eval_samples, r);
      worst = std::max(worst, gg_cdf_distance(s.col(0)));
    }
    return worst;
  }
  throw ConfigError("unknown metric: " + metric);
}

// ---- trial loop -----------------------------------------------------------------

inline ParamVector init_profile(const Game& g, Rng& init_rng) {
  ParamVector x = g.zeros();
  for (int i = 0; i < g.players; ++i) x.block(i) = g.init_player(i, init_rng);
  // Distance-to-equilibrium benchmarks start on the unit sphere around the
  // equilibrium, so every trial's curve begins at distance 1.
  if (g.ne && !g.ne->prob_space) {
    const double d = (x.flat - g.ne->target).norm();
    if (d > 0) x.flat = g.ne->target + (x.flat - g.ne->target) / d;
  }
  return x;
}

inline std::vector<TrialRecord> run_trial(const Game& g, const ExperimentConfig& cfg,
                                          const std::vector<std::string>& metrics,
                                          int trial) {
  Rng trial_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(trial)));
  Rng init_rng = trial_rng.fork(0);
  ParamVector x = init_profile(g, init_rng);
  Stepper stepper = Stepper::make(g, cfg.method_config(), init_rng);

  std::vector<TrialRecord> recs;
  bool diverged = false;
  auto emit = [&](long long step) {
    for (const std::string& m : metrics) {
      if (diverged)
        recs.push_back({trial, step, m, 0.0, true});
      else
        recs.push_back({trial, step, m,
                        eval_metric(g, m, x, cfg, trial_rng.fork(2 * step + 1)), false});
    }
  };
  emit(0);
  for (long long t = 1; t <= cfg.steps; ++t) {
    if (!diverged) {
      try {
        x = stepper.step(x, schedule_step(cfg, t), trial_rng.fork(2 * t));
      } catch (const NumericError&) {
        diverged = true;
      }
      if (!diverged && (!x.flat.allFinite() || x.flat.norm() > 1e6)) diverged = true;
    }
    if (t % cfg.eval_every == 0 || t == cfg.steps) emit(t);
  }
  return recs;
}

inline int worker_count(int trials) {
  int w = 0;
  if (const char* env = std::getenv("NASHDYN_WORKERS")) w = std::atoi(env);
  if (w < 1) w = static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  return std::min(w, trials);
}

inline std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Game g = make_game(cfg.game, GameParams{cfg.batch_size});
  require(method_supported(g, cfg.method),
          "method '" + cfg.method + "' is not available on game '" + cfg.game + "'");
  const std::vector<std::string> metrics =
      cfg.metrics.empty() ? default_metrics(g) : cfg.metrics;

  std::vector<std::vector<TrialRecord>> per_trial(cfg.trials);
  const int workers = worker_count(cfg.trials);
  if (workers <= 1) {
    for (int k = 0; k < cfg.trials; ++k) per_trial[k] = run_trial(g, cfg, metrics, k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < cfg.trials; k = next.fetch_add(1))
          per_trial[k] = run_trial(g, cfg, metrics, k);
      });
    for (std::thread& th : pool) th.join();
  }
  std::vector<TrialRecord> out;
  for (std::vector<TrialRecord>& recs : per_trial)
    for (TrialRecord& r : recs) out.push_back(std::move(r));
  return out;
}

// ---- aggregation ------------------------------------------------------------------

// Per-(step, metric) mean and standard error over non-diverged trials, plus a
// diverged-trial count. Aggregate rows use trial = -1 and suffixed metric
// names; if every trial diverged, the mean/stderr rows carry the diverged
// marker themselves.
inline std::vector<TrialRecord> aggregate(const std::vector<TrialRecord>& records) {
  std::vector<std::pair<long long, std::string>> keys;
  std::map<std::pair<long long, std::string>, std::vector<const TrialRecord*>> groups;
  for (const TrialRecord& r : records) {
    if (r.trial < 0) continue;
    auto key = std::make_pair(r.step, r.metric);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<TrialRecord> out;
  for (const auto& key : keys) {
    const auto& rows = groups[key];
    double sum = 0;
    int n = 0, d = 0;
    for (const TrialRecord* r : rows) {
      if (r->diverged) {
        ++d;
      } else {
        sum += r->value;
        ++n;
      }
    }
    TrialRecord mean{-1, key.first, key.second + "_mean", 0, n == 0};
    TrialRecord err{-1, key.first, key.second + "_stderr", 0, n == 0};
    if (n > 0) {
      mean.value = sum / n;
      double ss = 0;
      for (const TrialRecord* r : rows)
        if (!r->diverged) ss += (r->value - mean.value) * (r->value - mean.value);
      err.value = n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
    }
    out.push_back(std::move(mean));
    out.push_back(std::move(err));
    out.push_back({-1, key.first, key.second + "_diverged", static_cast<double>(d), false});
  }
  return out;
}

// ---- CSV ---------------------------------------------------------------------------

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void emit_csv(const ExperimentConfig& cfg, const std::vector<TrialRecord>& records,
                     std::ostream& os) {
  os << "game,method,trial,step,metric,value\n";
  for (const TrialRecord& r : records) {
    os << cfg.game << ',' << cfg.method << ',' << r.trial << ',' << r.step << ','
       << r.metric << ',' << (r.diverged ? std::string("diverged") : format_value(r.value))
       << '\n';
  }
}

inline void emit_csv(const ExperimentConfig& cfg, const std::vector<TrialRecord>& records,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // binary: LF line endings everywhere
  require(os.good(), "emit_csv: cannot open '" + path + "' for writing");
  emit_csv(cfg, records, os);
  os.flush();
  require(os.good(), "emit_csv: write to '" + path + "' failed");
}

struct CsvData {
  std::string game, method;
  std::vector<TrialRecord> records;
};

inline CsvData parse_csv(std::istream& is) {
  CsvData data;
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "parse_csv: empty input");
  require(line == "game,method,trial,step,metric,value", "parse_csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<std::string, 6> f;
    std::size_t pos = 0;
    for (int k = 0; k < 5; ++k) {
      std::size_t c = line.find(',', pos);
      require(c != std::string::npos, "parse_csv: short row");
      f[k] = line.substr(pos, c - pos);
      pos = c + 1;
    }
    f[5] = line.substr(pos);
    TrialRecord r;
    r.trial = std::stoi(f[2]);
    r.step = std::stoll(f[3]);
    r.metric = f[4];
    if (f[5] == "diverged") {
      r.diverged = true;
    } else {
      r.value = std::stod(f[5]);
    }
    data.game = f[0];
    data.method = f[1];
    data.records.push_back(std::move(r));
  }
  return data;
}

inline CsvData parse_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "parse_csv: cannot open '" + path + "'");
  return parse_csv(is);
}

// ---- config files ---------------------------------------------------------------------

inline void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                            const std::string& value) {
  try {
    if (key == "game") cfg.game = value;
    else if (key == "method") cfg.method = value;
    else if (key == "eta") cfg.eta = std::stod(value);
    else if (key == "gamma") cfg.gamma = std::stod(value);
    else if (key == "steps") cfg.steps = std::stoll(value);
    else if (key == "trials") cfg.trials = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "ensemble_size") cfg.ensemble_size = std::stoi(value);
    else if (key == "brf_hidden") cfg.brf_hidden = std::stoi(value);
    else if (key == "eval_every") cfg.eval_every = std::stoll(value);
    else if (key == "schedule") cfg.schedule = value;
    else if (key == "harmonic_c") cfg.harmonic_c = std::stod(value);
    else if (key == "eval_samples") cfg.eval_samples = std::stoi(value);
    else if (key == "eval_restarts") cfg.eval_restarts = std::stoi(value);
    else if (key == "eval_inner_steps") cfg.eval_inner_steps = std::stoi(value);
    else if (key == "eval_inner_lr") cfg.eval_inner_lr = std::stod(value);
    else if (key == "out") cfg.out = value;
    else if (key == "metrics") {
      cfg.metrics.clear();
      std::size_t pos = 0;
      while (pos <= value.size()) {
        std::size_t c = value.find_first_of(";,", pos);
        if (c == std::string::npos) c = value.size();
        if (c > pos) cfg.metrics.push_back(value.substr(pos, c - pos));
        pos = c + 1;
      }
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for config key '" + key + "': " + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("bad value for config key '" + key + "': " + value);
  }
}

// Plain-text configuration: one key=value per line; blank lines and lines
// starting with '#' are ignored. Flags given on the command line win.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "config: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    std::size_t eq = line.find('=');
    require(eq != std::string::npos && eq > b,
            "config: line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(b, eq - b);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vb = value.find_first_not_of(" \t");
    value = (vb == std::string::npos) ? std::string() : value.substr(vb);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
    apply_config_kv(cfg, key, value);
  }
}

// ---- property suite ----------------------------------------------------------------------

// Fast self-checks of the library's core invariants, run by the `check`
// subcommand. Returns true when every property holds.
inline bool run_property_suite(std::ostream& os) {
  int failures = 0;
  auto check = [&](bool ok, const std::string& name) {
    os << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  // phi(x, x) = 0 on every game (common random numbers make stochastic games
  // exact here too).
  {
    bool ok = true;
    for (const std::string& id : game_ids()) {
      Game g = make_game(id, GameParams{8});
      Rng rng(17);
      for (int r = 0; r < 3 && ok; ++r) {
        ParamVector x = g.zeros();
        for (int i = 0; i < g.players; ++i) x.block(i) = g.init_player(i, rng);
        NiEvaluation e = ni(g, x, x, rng.fork(100 + r));
        ok = ok && std::abs(e.phi) <= 1e-9;
      }
      if (!ok) os << "  deviation-gain zero fails on " << id << "\n";
    }
    check(ok, "zero deviation gain at y = x on all games");
  }

  // Rank weighting.
  {
    VectorXd v(3);
    v << 3, 1, 2;
    RankWeights rw = rank_weights(v);
    bool ok = rw.ranks == std::vector<int>{3, 1, 2};
    VectorXd tied(2);
    tied << 5, 5;
    ok = ok && rank_weights(tied).ranks == std::vector<int>{2, 1};
    ok = ok && std::abs(mix(v) - 14.0 / 3.0) < 1e-15;
    Rng rng(3);
    for (int t = 0; t < 50 && ok; ++t) {
      VectorXd a = rng.gaussian_vector(6);
      VectorXd b = (2.0 * a).array() + 7.0;  // strictly increasing transform
      ok = rank_weights(a).ranks == rank_weights(b).ranks;
    }
    check(ok, "rank weights: ties, mix, monotone invariance");
  }

  // Schedules and aggregation arithmetic.
  {
    ExperimentConfig cfg;
    cfg.schedule = "harmonic";
    cfg.harmonic_c = 1.0;
    bool ok = std::abs(schedule_step(cfg, 4) - 0.25) < 1e-15;
    cfg.schedule = "constant";
    ok = ok && schedule_step(cfg, 1234) == cfg.eta;
    std::vector<TrialRecord> recs = {{0, 0, "m", 1.0, false}, {1, 0, "m", 3.0, false}};
    std::vector<TrialRecord> agg = aggregate(recs);
    ok = ok && agg.size() == 3 && agg[0].value == 2.0 && agg[1].value == 1.0 &&
         agg[2].value == 0.0;
    check(ok, "schedule and aggregation arithmetic");
  }

  // CSV round trip.
  {
    ExperimentConfig cfg;
    cfg.game = "mp2";
    cfg.method = "sg";
    std::vector<TrialRecord> recs = {{0, 0, "m", 0.138671875, false},  // exact in 12 digits
                                     {0, 10, "m", 0.0, true},
                                     {-1, 10, "m_mean", 2.5, false}};
    std::stringstream ss;
    emit_csv(cfg, recs, ss);
    CsvData parsed = parse_csv(ss);
    check(parsed.game == "mp2" && parsed.records == recs, "CSV round trip");
  }

  // Assignment oracle agreement.
  {
    Rng rng(9);
    bool ok = true;
    for (int t = 0; t < 20 && ok; ++t) {
      MatrixXd c = rng.gaussian_matrix(5, 5);
      ok = std::abs(assignment_solve(c).cost - assignment_brute_force(c).cost) < 1e-9;
    }
    check(ok, "assignment solver matches brute force");
  }

  // Exact exploitability at uniform mixtures of the cyclic matrix games.
  {
    bool ok = true;
    for (const std::string& id : {"mp2", "rps3", "rps4"}) {
      Game g = make_game(id);
      ParamVector x = g.zeros();  // zero logits = uniform
      ok = ok && exact_exploitability(g, x).phi < 1e-12;
    }
    check(ok, "uniform play is unexploitable in the cyclic matrix games");
  }

  // Lower-bound property of the restricted-response estimate.
  {
    Game g = make_game("mp2");
    Rng rng(11);
    bool ok = true;
    for (int t = 0; t < 10 && ok; ++t) {
      ParamVector x = g.zeros();
      for (int i = 0; i < g.players; ++i) x.block(i) = g.init_player(i, rng);
      std::vector<std::vector<VectorXd>> resp(g.players);
      for (int i = 0; i < g.players; ++i)
        for (int j = 0; j < 4; ++j) resp[i].push_back(g.init_player(i, rng));
      ok = approx_exploitability_from_responses(g, x, resp) <=
           exact_exploitability(g, x).phi + 1e-9;
    }
    check(ok, "restricted-response exploitability never exceeds the exact value");
  }

  // Distance under the simultaneous gradient on the saddle never shrinks.
  {
    Game g = make_game("saddle");
    ExperimentConfig cfg;
    cfg.game = "saddle";
    cfg.method = "sg";
    cfg.steps = 100;
    cfg.trials = 1;
    cfg.eval_every = 1;
    std::vector<TrialRecord> recs = run_experiment(cfg);
    bool ok = recs.size() == 101;
    for (std::size_t k = 1; k < recs.size() && ok; ++k)
      ok = recs[k].value >= recs[k - 1].value - 1e-12;
    check(ok, "saddle distance is non-decreasing under the simultaneous gradient");
  }

  // Determinism: identical bytes for identical (config, seed).
  {
    ExperimentConfig cfg;
    cfg.game = "mp2";
    cfg.method = "eg";
    cfg.steps = 50;
    cfg.trials = 2;
    cfg.seed = 42;
    cfg.eval_every = 10;
    std::stringstream a, b;
    emit_csv(cfg, run_experiment(cfg), a);
    emit_csv(cfg, run_experiment(cfg), b);
    check(a.str() == b.str(), "rerun with the same seed is byte-identical");
  }

  os << (failures == 0 ? "all properties hold\n"
                       : std::to_string(failures) + " propert(ies) failed\n");
  return failures == 0;
}

}  // namespace nashdyn
