#pragma once

// Left-to-right phoneme HMMs with one or two diagonal-Gaussian emitting
// states, Viterbi scoring and the speaker-group recognition harness.
//
// State layout: 0 is the non-emitting entry, 1..n the emitting states and
// n+1 the non-emitting, absorbing exit.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prosody/corpus.hpp"
#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/feature_extraction.hpp"
#include "prosody/speaker.hpp"

namespace prosody {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr double kSelfLoopProbability = 0.5;

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const double log_norm = (variance.array() * (2.0 * std::numbers::pi)).log().sum();
    const double mahalanobis = ((x - mean).array().square() / variance.array()).sum();
    return -0.5 * (log_norm + mahalanobis);
  }
};

class PhonemeHmm {
 public:
  PhonemeHmm(std::string label, Eigen::MatrixXd transitions, std::vector<DiagGaussian> emissions,
             double variance_floor = kVarianceFloor)
      : label_(std::move(label)), transitions_(std::move(transitions)), emissions_(std::move(emissions)) {
    validate(variance_floor);
    log_transitions_ = transitions_.unaryExpr([](double p) { return safe_log(p); });
  }

  /// Entry -> S1 -> ... -> Sn -> exit with the given self-loop probability.
  static PhonemeHmm left_to_right(std::string label, std::vector<DiagGaussian> emissions,
                                  double self_loop = kSelfLoopProbability) {
    const auto n = static_cast<Eigen::Index>(emissions.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 2, n + 2);
    a(0, 1) = 1.0;
    for (Eigen::Index i = 1; i <= n; ++i) {
      a(i, i) = self_loop;
      a(i, i + 1) = 1.0 - self_loop;
    }
    a(n + 1, n + 1) = 1.0;
    return PhonemeHmm(std::move(label), std::move(a), std::move(emissions));
  }

  const std::string& label() const noexcept { return label_; }
  std::size_t n_emitting() const noexcept { return emissions_.size(); }
  Eigen::Index n_states() const noexcept { return transitions_.rows(); }
  Eigen::Index exit_state() const noexcept { return n_states() - 1; }
  Eigen::Index dim() const noexcept { return emissions_.front().mean.size(); }
  const Eigen::MatrixXd& transitions() const noexcept { return transitions_; }
  const Eigen::MatrixXd& log_transitions() const noexcept { return log_transitions_; }
  const std::vector<DiagGaussian>& emissions() const noexcept { return emissions_; }
  /// Emission density of emitting state `state` (1-based, as in the layout).
  const DiagGaussian& emission(Eigen::Index state) const { return emissions_.at(static_cast<std::size_t>(state - 1)); }

 private:
  void validate(double variance_floor) const {
    const auto fail = [&](const std::string& why) { throw Error(ErrorCode::MalformedModel, label_ + ": " + why); };
    if (emissions_.size() != 1 && emissions_.size() != 2) fail("1 or 2 emitting states required");
    const auto n = static_cast<Eigen::Index>(emissions_.size()) + 2;
    if (transitions_.rows() != n || transitions_.cols() != n) fail("transition matrix must be " + std::to_string(n) + "x" + std::to_string(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(transitions_.row(i).sum() - 1.0) > 1e-9) fail("transition row " + std::to_string(i) + " does not sum to 1");
      for (Eigen::Index j = 0; j < n; ++j) {
        const double p = transitions_(i, j);
        if (!(p >= 0.0 && p <= 1.0)) fail("transition probability outside [0,1]");
        if (j < i && p != 0.0) fail("backward transition");
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != 1 && transitions_(0, j) != 0.0) fail("entry state must lead only to the first emitting state");
    }
    if (transitions_(n - 1, n - 1) != 1.0) fail("exit state must be absorbing");
    for (const auto& g : emissions_) {
      if (g.mean.size() != kFeatureDim || g.variance.size() != kFeatureDim) {
        fail("emission dimension must be " + std::to_string(kFeatureDim));
      }
      if ((g.variance.array() < variance_floor * (1.0 - 1e-12)).any()) fail("variance below floor");
    }
  }

  std::string label_;
  Eigen::MatrixXd transitions_;
  Eigen::MatrixXd log_transitions_;
  std::vector<DiagGaussian> emissions_;
};

// ---------------------------------------------------------------------------
// Training

/// Emission statistics only: one Gaussian from all frames, or for two
/// emitting states each sample split at frames/2, first half to S1 and the
/// rest to S2. Transitions are the fixed left-to-right 0.5/0.5 layout.
inline PhonemeHmm train_model(const std::string& label, std::span<const FeatureMatrix> samples, std::size_t n_emitting,
                              double variance_floor = kVarianceFloor) {
  if (n_emitting != 1 && n_emitting != 2) throw Error(ErrorCode::InvalidArgument, "n_emitting must be 1 or 2");
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no training samples for " + label);
  Eigen::Index total = 0;
  for (const auto& s : samples) {
    if (s.dim() != kFeatureDim) {
      throw Error(ErrorCode::DimensionMismatch, label + ": training sample has " + std::to_string(s.dim()) + " columns");
    }
    if (s.frames() < static_cast<Eigen::Index>(n_emitting)) {
      throw Error(ErrorCode::SampleTooShort, label + ": sample with " + std::to_string(s.frames()) +
                                                 " frame(s) cannot feed " + std::to_string(n_emitting) + " states");
    }
    total += s.frames();
  }

  std::vector<DiagGaussian> emissions;
  if (n_emitting == 1) {
    Eigen::MatrixXd all(total, kFeatureDim);
    Eigen::Index row = 0;
    for (const auto& s : samples) {
      all.middleRows(row, s.frames()) = s.values;
      row += s.frames();
    }
    const auto stats = compute_stats(label, all, variance_floor);
    emissions.push_back({stats.mean, stats.variance});
  } else {
    Eigen::Index first_total = 0;
    for (const auto& s : samples) first_total += s.frames() / 2;
    Eigen::MatrixXd first(first_total, kFeatureDim);
    Eigen::MatrixXd second(total - first_total, kFeatureDim);
    Eigen::Index r1 = 0;
    Eigen::Index r2 = 0;
    for (const auto& s : samples) {
      const Eigen::Index mid = s.frames() / 2;
      first.middleRows(r1, mid) = s.values.topRows(mid);
      second.middleRows(r2, s.frames() - mid) = s.values.bottomRows(s.frames() - mid);
      r1 += mid;
      r2 += s.frames() - mid;
    }
    const auto a = compute_stats(label, first, variance_floor);
    const auto b = compute_stats(label, second, variance_floor);
    emissions.push_back({a.mean, a.variance});
    emissions.push_back({b.mean, b.variance});
  }
  return PhonemeHmm::left_to_right(label, std::move(emissions));
}

// ---------------------------------------------------------------------------
// Viterbi

struct ViterbiResult {
  double log_probability = kLogZero;
  std::vector<Eigen::Index> path;  // emitting state per frame; empty if no path
};

inline void check_observation(const PhonemeHmm& model, const FeatureMatrix& obs) {
  if (obs.frames() == 0) throw Error(ErrorCode::EmptyObservation, "observation sequence is empty");
  if (obs.dim() != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "observation dimension " + std::to_string(obs.dim()) +
                                                  " does not match model dimension " + std::to_string(model.dim()));
  }
}

/// Best entry-to-exit state path in the log domain.
inline ViterbiResult viterbi_decode(const PhonemeHmm& model, const FeatureMatrix& obs) {
  check_observation(model, obs);
  const Eigen::Index t_max = obs.frames();
  const Eigen::Index n = static_cast<Eigen::Index>(model.n_emitting());
  const Eigen::Index exit = model.exit_state();
  const auto& la = model.log_transitions();

  Eigen::MatrixXd emit(t_max, n + 1);
  for (Eigen::Index t = 0; t < t_max; ++t) {
    for (Eigen::Index j = 1; j <= n; ++j) emit(t, j) = model.emission(j).log_density(obs.values.row(t).transpose());
  }

  Eigen::MatrixXd delta = Eigen::MatrixXd::Constant(t_max, n + 1, kLogZero);
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(t_max, n + 1);
  for (Eigen::Index j = 1; j <= n; ++j) delta(0, j) = la(0, j) + emit(0, j);
  for (Eigen::Index t = 1; t < t_max; ++t) {
    for (Eigen::Index j = 1; j <= n; ++j) {
      double best = kLogZero;
      Eigen::Index arg = 0;
      for (Eigen::Index i = 1; i <= j; ++i) {
        const double cand = delta(t - 1, i) + la(i, j);
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      delta(t, j) = best + emit(t, j);
      back(t, j) = static_cast<int>(arg);
    }
  }

  ViterbiResult result;
  Eigen::Index last = 0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    const double cand = delta(t_max - 1, i) + la(i, exit);
    if (cand > result.log_probability) {
      result.log_probability = cand;
      last = i;
    }
  }
  if (last == 0) return result;
  result.path.assign(static_cast<std::size_t>(t_max), 0);
  for (Eigen::Index t = t_max - 1; t >= 0; --t) {
    result.path[static_cast<std::size_t>(t)] = last;
    if (t > 0) last = back(t, last);
  }
  return result;
}

inline double viterbi_score(const PhonemeHmm& model, const FeatureMatrix& obs) {
  return viterbi_decode(model, obs).log_probability;
}

// ---------------------------------------------------------------------------
// Recognition

class HmmSet {
 public:
  void add(PhonemeHmm model) {
    if (!models_.empty() && model.n_emitting() != n_emitting_) {
      throw Error(ErrorCode::InvalidArgument, "model " + model.label() + " has a different topology size");
    }
    n_emitting_ = model.n_emitting();
    const std::string key = model.label();
    models_.insert_or_assign(key, std::move(model));
  }

  bool empty() const noexcept { return models_.empty(); }
  std::size_t size() const noexcept { return models_.size(); }
  std::size_t n_emitting() const noexcept { return n_emitting_; }
  const std::map<std::string, PhonemeHmm>& models() const noexcept { return models_; }

 private:
  std::map<std::string, PhonemeHmm> models_;
  std::size_t n_emitting_ = 0;
};

struct RecognitionResult {
  std::string predicted;
  std::map<std::string, double> log_likelihoods;
};

/// Maximum-likelihood model; equal scores resolve to the lexicographically
/// smallest label.
inline RecognitionResult recognize(const HmmSet& set, const FeatureMatrix& obs) {
  if (set.empty()) throw Error(ErrorCode::EmptyModelSet, "no models to score against");
  RecognitionResult result;
  double best = kLogZero;
  for (const auto& [label, model] : set.models()) {
    const double score = viterbi_score(model, obs);
    result.log_likelihoods[label] = score;
    if (result.predicted.empty() || score > best) {
      best = score;
      result.predicted = label;
    }
  }
  return result;
}

inline HmmSet train_set(std::span<const std::pair<std::string, FeatureMatrix>> labeled, std::size_t n_emitting,
                        double variance_floor = kVarianceFloor) {
  std::map<std::string, std::vector<FeatureMatrix>> by_label;
  for (const auto& [label, m] : labeled) by_label[label].push_back(m);
  HmmSet set;
  for (const auto& [label, samples] : by_label) set.add(train_model(label, samples, n_emitting, variance_floor));
  return set;
}

// ---------------------------------------------------------------------------
// Group evaluation

struct LabeledSegment {
  std::string segment_id;
  std::string label;
  SpeakerGroup speaker_group = SpeakerGroup::Male;
  FeatureMatrix features;
};

struct RateCell {
  SpeakerGroup train_group = SpeakerGroup::Female;
  SpeakerGroup test_group = SpeakerGroup::Female;
  double rate = 0.0;  // percent
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct RateMatrix {
  std::size_t n_emitting = 1;
  std::vector<RateCell> cells;

  double rate(SpeakerGroup train, SpeakerGroup test) const {
    for (const auto& c : cells) {
      if (c.train_group == train && c.test_group == test) return c.rate;
    }
    throw Error(ErrorCode::InvalidArgument, "no such rate cell");
  }
};

/// Train/test pairs in the order of the published rate table.
inline constexpr std::array<std::pair<SpeakerGroup, SpeakerGroup>, 4> kRatePairs = {{
    {SpeakerGroup::Female, SpeakerGroup::Female},
    {SpeakerGroup::Male, SpeakerGroup::Male},
    {SpeakerGroup::Male, SpeakerGroup::Female},
    {SpeakerGroup::Female, SpeakerGroup::Male},
}};

namespace detail {

inline std::string cell_name(SpeakerGroup train, SpeakerGroup test) {
  return std::string(to_string(train)) + "/" + std::string(to_string(test));
}

/// Same-group cells split each phoneme's segments separately so every tested
/// phoneme keeps training data; a phoneme with one segment only trains.
inline TrainTestSplit<LabeledSegment> stratified_split(std::span<const LabeledSegment> corpus, SpeakerGroup group) {
  std::map<std::string, std::vector<LabeledSegment>> by_label;
  for (const auto& s : corpus) {
    if (s.speaker_group == group) by_label[s.label].push_back(s);
  }
  TrainTestSplit<LabeledSegment> split;
  for (auto& [label, segs] : by_label) {
    std::sort(segs.begin(), segs.end(),
              [](const LabeledSegment& a, const LabeledSegment& b) { return a.segment_id < b.segment_id; });
    const std::size_t k = same_group_train_count(segs.size());
    split.train.insert(split.train.end(), segs.begin(), segs.begin() + static_cast<std::ptrdiff_t>(k));
    split.test.insert(split.test.end(), segs.begin() + static_cast<std::ptrdiff_t>(k), segs.end());
  }
  return split;
}

}  // namespace detail

inline RateCell evaluate_cell(std::span<const LabeledSegment> corpus, SpeakerGroup train_group, SpeakerGroup test_group,
                              std::size_t n_emitting) {
  const std::string name = detail::cell_name(train_group, test_group);
  TrainTestSplit<LabeledSegment> split;
  try {
    split = train_group == test_group ? detail::stratified_split(corpus, train_group)
                                      : split_by_group(corpus, train_group, test_group);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyGroup) throw;
    throw Error(ErrorCode::InsufficientData, name + ": " + e.what());
  }
  if (split.train.empty()) throw Error(ErrorCode::InsufficientData, name + ": no training segments");
  if (split.test.empty()) throw Error(ErrorCode::InsufficientData, name + ": no test segments");

  std::vector<std::pair<std::string, FeatureMatrix>> labeled;
  for (const auto& s : split.train) labeled.emplace_back(s.label, s.features);
  const HmmSet set = train_set(labeled, n_emitting);
  for (const auto& s : split.test) {
    if (!set.models().contains(s.label)) {
      throw Error(ErrorCode::InsufficientData, name + ": no training data for phoneme '" + s.label + "'");
    }
  }

  RateCell cell;
  cell.train_group = train_group;
  cell.test_group = test_group;
  cell.total = split.test.size();
  for (const auto& s : split.test) {
    if (recognize(set, s.features).predicted == s.label) ++cell.correct;
  }
  cell.rate = 100.0 * static_cast<double>(cell.correct) / static_cast<double>(cell.total);
  return cell;
}

/// Recognition rate for every train/test speaker-group pair.
inline RateMatrix evaluate_rates(std::span<const LabeledSegment> corpus, std::size_t n_emitting) {
  RateMatrix matrix;
  matrix.n_emitting = n_emitting;
  for (const auto& [train, test] : kRatePairs) matrix.cells.push_back(evaluate_cell(corpus, train, test, n_emitting));
  return matrix;
}

inline void write_rate_csv(std::ostream& out, std::span<const RateMatrix> matrices) {
  out << "train_group,test_group,n_emitting,rate,correct,total\n";
  for (const auto& m : matrices) {
    for (const auto& c : m.cells) {
      out << csv::join({std::string(to_string(c.train_group)), std::string(to_string(c.test_group)),
                        std::to_string(m.n_emitting), csv::format_fixed(c.rate, 2), std::to_string(c.correct),
                        std::to_string(c.total)})
          << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Persistence
//
//   prosody-hmm 1
//   models <count>
//   model <label>
//   n_emitting <n>
//   dim 39
//   transitions
//   <n+2 rows of n+2 values>
//   state <i> mean <39 values>
//   state <i> variance <39 values>
//   end

inline constexpr int kModelFormatVersion = 1;

inline void write_models(std::ostream& out, const HmmSet& set) {
  out << "prosody-hmm " << kModelFormatVersion << '\n';
  out << "models " << set.size() << '\n';
  for (const auto& [label, m] : set.models()) {
    out << "model " << label << '\n';
    out << "n_emitting " << m.n_emitting() << '\n';
    out << "dim " << m.dim() << '\n';
    out << "transitions\n";
    for (Eigen::Index i = 0; i < m.n_states(); ++i) {
      for (Eigen::Index j = 0; j < m.n_states(); ++j) out << (j ? " " : "") << csv::format_exact(m.transitions()(i, j));
      out << '\n';
    }
    for (Eigen::Index s = 1; s <= static_cast<Eigen::Index>(m.n_emitting()); ++s) {
      for (const char* what : {"mean", "variance"}) {
        const auto& v = std::string_view(what) == "mean" ? m.emission(s).mean : m.emission(s).variance;
        out << "state " << s << ' ' << what;
        for (Eigen::Index d = 0; d < v.size(); ++d) out << ' ' << csv::format_exact(v(d));
        out << '\n';
      }
    }
    out << "end\n";
  }
}

namespace detail {

class ModelReader {
 public:
  ModelReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::vector<std::string> tokens() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::vector<std::string> out;
      for (std::string tok; ss >> tok;) out.push_back(tok);
      return out;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string> expect(const std::string& keyword, std::size_t n_tokens) {
    auto t = tokens();
    if (t.empty() || t[0] != keyword || t.size() != n_tokens) {
      fail("expected '" + keyword + "' line with " + std::to_string(n_tokens) + " tokens");
    }
    return t;
  }

  double number(const std::string& text) {
    try {
      return csv::parse_double(text, where());
    } catch (const Error&) {
      fail("bad number '" + text + "'");
    }
  }

  long long integer(const std::string& text) {
    try {
      return csv::parse_int(text, where());
    } catch (const Error&) {
      fail("bad integer '" + text + "'");
    }
  }

  [[noreturn]] void fail(const std::string& why) const { throw Error(ErrorCode::MalformedModel, where() + ": " + why); }

 private:
  std::string where() const { return name_ + ":" + std::to_string(line_); }

  std::istream& in_;
  std::string name_;
  std::size_t line_ = 0;
};

}  // namespace detail

inline HmmSet read_models(std::istream& in, const std::string& name = "<models>") {
  detail::ModelReader r(in, name);
  const auto head = r.expect("prosody-hmm", 2);
  if (r.integer(head[1]) != kModelFormatVersion) r.fail("unsupported model format version " + head[1]);
  const auto count = r.integer(r.expect("models", 2)[1]);
  if (count < 0) r.fail("negative model count");
  HmmSet set;
  for (long long m = 0; m < count; ++m) {
    const std::string label = r.expect("model", 2)[1];
    const auto n = r.integer(r.expect("n_emitting", 2)[1]);
    if (n != 1 && n != 2) r.fail("n_emitting must be 1 or 2");
    const auto dim = r.integer(r.expect("dim", 2)[1]);
    if (dim != kFeatureDim) r.fail("dim must be " + std::to_string(kFeatureDim));
    r.expect("transitions", 1);
    const Eigen::Index states = n + 2;
    Eigen::MatrixXd a(states, states);
    for (Eigen::Index i = 0; i < states; ++i) {
      const auto row = r.tokens();
      if (static_cast<Eigen::Index>(row.size()) != states) r.fail("transition row needs " + std::to_string(states) + " values");
      for (Eigen::Index j = 0; j < states; ++j) a(i, j) = r.number(row[static_cast<std::size_t>(j)]);
    }
    std::vector<DiagGaussian> emissions(static_cast<std::size_t>(n));
    for (long long s = 1; s <= n; ++s) {
      for (const std::string what : {"mean", "variance"}) {
        const auto t = r.expect("state", static_cast<std::size_t>(dim) + 3);
        if (r.integer(t[1]) != s || t[2] != what) r.fail("expected 'state " + std::to_string(s) + " " + what + "'");
        Eigen::VectorXd v(dim);
        for (Eigen::Index d = 0; d < dim; ++d) v(d) = r.number(t[static_cast<std::size_t>(d) + 3]);
        (what == "mean" ? emissions[static_cast<std::size_t>(s - 1)].mean
                        : emissions[static_cast<std::size_t>(s - 1)].variance) = std::move(v);
      }
    }
    r.expect("end", 1);
    set.add(PhonemeHmm(label, std::move(a), std::move(emissions)));
  }
  return set;
}

}  // namespace prosody
