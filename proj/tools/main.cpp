// nashdyn command-line front end.
#include <algorithm>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "nashdyn/harness.hpp"

namespace {

constexpr const char* kUsage =
    R"(usage: nashdyn <command> [flags]

commands:
  run            run an experiment and emit CSV records
  list-games     print the available game ids
  list-methods   print the available method ids
  check          run the library's property suite (exit 0 iff all hold)

run flags (every flag is also a config-file key, dashes become underscores):
  --game ID            game to play (see list-games)          [saddle]
  --method ID          update rule (see list-methods)         [sg]
  --steps N            optimizer steps per trial              [10000]
  --trials N           independent trials                     [64]
  --seed N             master seed                            [0]
  --eta X              step size                              [1e-3]
  --gamma X            lookahead / preconditioning scale      [1e-1]
  --out PATH           CSV destination (stdout when omitted)
  --config PATH        key=value file applied before other flags
  --metrics A,B        metric columns (default: the game's natural metric)
  --eval-every N       evaluation cadence in steps            [10]
  --schedule NAME      constant | harmonic                    [constant]
  --harmonic-c X       numerator for the harmonic schedule    [1]
  --batch-size N       sample batch for stochastic games      [64]
  --ensemble-size N    best-response candidates per player    [10]
  --brf-hidden N       best-response network hidden width     [32]
  --eval-samples N     sample count for distribution metrics  [256]
  --eval-restarts N    search restarts for approximate regret [8]
  --eval-inner-steps N ascent steps per restart               [200]
  --eval-inner-lr X    ascent step size                       [1e-2]

The CSV schema is game,method,trial,step,metric,value with aggregate rows
(trial = -1, metric suffixes _mean/_stderr/_diverged) appended after the
per-trial rows. NASHDYN_WORKERS caps the number of parallel trial workers.
)";

int usage_error(const std::string& msg) {
  std::cerr << "nashdyn: " << msg << "\n(try 'nashdyn help' for usage)\n";
  return 2;
}

int cmd_run(int argc, char** argv) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string config_path;
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0) return usage_error("unexpected argument: " + arg);
    std::string key = arg.substr(2);
    std::string value;
    std::size_t eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= argc) return usage_error("flag --" + key + " needs a value");
      value = argv[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "config")
      config_path = value;
    else
      kv.emplace_back(std::move(key), std::move(value));
  }

  nashdyn::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) nashdyn::load_config_file(cfg, config_path);
    for (const auto& [key, value] : kv) nashdyn::apply_config_kv(cfg, key, value);
  } catch (const nashdyn::ConfigError& e) {
    return usage_error(e.what());
  }

  try {
    std::vector<nashdyn::TrialRecord> records = nashdyn::run_experiment(cfg);
    std::vector<nashdyn::TrialRecord> agg = nashdyn::aggregate(records);
    records.insert(records.end(), std::make_move_iterator(agg.begin()),
                   std::make_move_iterator(agg.end()));
    if (cfg.out.empty()) {
      nashdyn::emit_csv(cfg, records, std::cout);
    } else {
      nashdyn::emit_csv(cfg, records, cfg.out);
    }
  } catch (const nashdyn::ConfigError& e) {
    return usage_error(e.what());
  } catch (const std::exception& e) {
    std::cerr << "nashdyn: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 2;
  }
  const std::string cmd = argv[1];
  if (cmd == "help" || cmd == "--help" || cmd == "-h") {
    std::cout << kUsage;
    return 0;
  }
  if (cmd == "run") return cmd_run(argc, argv);
  if (cmd == "list-games") {
    if (argc != 2) return usage_error("list-games takes no arguments");
    for (const std::string& id : nashdyn::game_ids()) std::cout << id << "\n";
    return 0;
  }
  if (cmd == "list-methods") {
    if (argc != 2) return usage_error("list-methods takes no arguments");
    for (const std::string& id : nashdyn::method_ids()) std::cout << id << "\n";
    return 0;
  }
  if (cmd == "check") {
    if (argc != 2) return usage_error("check takes no arguments");
    return nashdyn::run_property_suite(std::cout) ? 0 : 1;
  }
  return usage_error("unknown command: " + cmd);
}
