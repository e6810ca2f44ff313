#pragma once

#include "equm/environments.hpp"
#include "equm/learners.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace equm {

/// Flat `key = value` configuration with dotted section prefixes. Lines
/// starting with '#' are comments. Typed getters record which keys were read
/// so that misspelled keys can be reported.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_real_list(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError naming every key that no getter has read, ignoring
  /// keys under the given prefixes.
  void reject_unused(const std::vector<std::string>& ignored_prefixes = {}) const;

 private:
  std::optional<std::string> lookup(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// Comma-separated list with surrounding whitespace trimmed.
std::vector<std::string> split_list(const std::string& s);

struct EnvSpec {
  enum class Kind { PortfolioSynth, Option, Dataset };

  Kind kind = Kind::PortfolioSynth;
  PortfolioSynthConfig portfolio;
  OptionEnvConfig option;
  std::string dataset_path;
  CsvFormatSpec csv;
  DatasetPortfolioConfig dataset;
};

struct LearnerSpec {
  enum class Method { Reinforce, Equm, Tamar, Xie, EqumAc };

  Method method = Method::Reinforce;
  UtilitySpec utility;
  TamarConfig tamar;
  XieConfig xie;
  AcConfig ac;
  std::vector<int> hidden;  // empty -> environment default widths
};

struct WalkforwardSpec {
  enum class Strategy { Learner, EqualWeight };

  int test_months = 240;
  int train_window = 120;
  long train_episodes = 10;
  Strategy strategy = Strategy::Learner;
};

struct ExperimentConfig {
  EnvSpec env;
  LearnerSpec learner;
  TrainOptions training;
  long final_eval_trials = 10000;
  WalkforwardSpec walkforward;
  std::string output_dir = "out";
  bool emit_svg = true;
  std::string label;  // empty -> derived from the learner
};

inline constexpr long kDeskEvalTrials = 10000;
inline constexpr long kFullEvalTrials = 100000;

/// Builds and validates an experiment from its keys. Keys under "sweep." are
/// left to the sweep parser; any other unknown key is a ConfigError.
ExperimentConfig experiment_from(const KeyValueConfig& kv);

/// "equm zeta=6", "tamar var=80", ...
std::string learner_descriptor(const LearnerSpec& learner);
std::string method_name(LearnerSpec::Method m);

/// Loads dataset files as needed. Throws DataError on ingestion failures.
std::shared_ptr<const Environment> make_environment(const EnvSpec& spec);
std::shared_ptr<const ReturnsMatrix> load_dataset(const EnvSpec& spec);

/// Policy layer widths for an environment: learner.hidden when set, otherwise
/// [d, d, d, A] for synthetic environments and [d, 100, 50, A] for datasets.
std::vector<int> policy_dims(const ExperimentConfig& cfg, const Environment& env);

}  // namespace equm
