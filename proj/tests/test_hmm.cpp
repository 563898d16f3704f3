#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "prosody/hmm.hpp"
#include "random_models.hpp"

using namespace prosody;

namespace {

FeatureMatrix frames_of(const Eigen::MatrixXd& values) {
  FeatureMatrix m;
  m.values = values;
  return m;
}

double brute_force(const PhonemeHmm& model, const FeatureMatrix& obs) {
  std::vector<Eigen::VectorXd> means, vars;
  for (const auto& g : model.emissions()) {
    means.push_back(g.mean);
    vars.push_back(g.variance);
  }
  return oracle::brute_force_viterbi(model.transitions(), means, vars, obs.values);
}

PhonemeHmm gaussian_model(const std::string& label, double centre, std::size_t n = 1) {
  std::vector<DiagGaussian> em(n, DiagGaussian{Eigen::VectorXd::Constant(kFeatureDim, centre),
                                               Eigen::VectorXd::Constant(kFeatureDim, 1.0)});
  return PhonemeHmm::left_to_right(label, em);
}

}  // namespace

TEST(TrainModel, IdenticalFramesOneState) {
  Eigen::RowVectorXd frame = Eigen::RowVectorXd::LinSpaced(kFeatureDim, -1.0, 1.0);
  const std::vector<FeatureMatrix> samples = {frames_of(frame.replicate(4, 1))};
  const auto m = train_model("a", samples, 1);
  EXPECT_EQ(m.n_emitting(), 1u);
  EXPECT_TRUE(m.emission(1).mean.transpose().isApprox(frame));
  EXPECT_TRUE((m.emission(1).variance.array() == kVarianceFloor).all());
  EXPECT_EQ(m.transitions()(1, 1), 0.5);
  EXPECT_EQ(m.transitions()(1, 2), 0.5);
  EXPECT_EQ(m.transitions()(0, 1), 1.0);
}

TEST(TrainModel, MidpointSplitTwoStates) {
  Eigen::MatrixXd v(10, kFeatureDim);
  v.topRows(5).setZero();
  v.bottomRows(5).setOnes();
  const std::vector<FeatureMatrix> samples = {frames_of(v)};
  const auto m = train_model("a", samples, 2);
  EXPECT_TRUE(m.emission(1).mean.isZero(1e-12));
  EXPECT_TRUE(m.emission(2).mean.isOnes(1e-12));
}

TEST(TrainModel, Errors) {
  const std::vector<FeatureMatrix> one_frame = {frames_of(Eigen::MatrixXd::Zero(1, kFeatureDim))};
  try {
    train_model("a", one_frame, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SampleTooShort);
  }
  try {
    train_model("a", std::vector<FeatureMatrix>{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(TrainModelProperty, RowStochasticAndValid) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 2u}) {
    std::vector<FeatureMatrix> samples;
    for (int k = 0; k < 4; ++k) samples.push_back(testgen::random_obs(rng, 5 + k));
    const auto m = train_model("x", samples, n);
    for (Eigen::Index i = 0; i < m.n_states(); ++i) EXPECT_NEAR(m.transitions().row(i).sum(), 1.0, 1e-12);
    for (const auto& g : m.emissions()) EXPECT_GE(g.variance.minCoeff(), kVarianceFloor);
  }
}

TEST(PhonemeHmm, RejectsInvalidTopology) {
  auto g = DiagGaussian{Eigen::VectorXd::Zero(kFeatureDim), Eigen::VectorXd::Ones(kFeatureDim)};
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 1) = 1.0;
  a(1, 1) = 0.5;
  a(1, 2) = 0.5;
  a(2, 2) = 1.0;
  EXPECT_NO_THROW(PhonemeHmm("ok", a, {g}));
  auto back = a;
  back(1, 0) = 0.5;
  back(1, 1) = 0.0;
  EXPECT_THROW(PhonemeHmm("b", back, {g}), Error);
  auto not_stochastic = a;
  not_stochastic(1, 2) = 0.4;
  EXPECT_THROW(PhonemeHmm("s", not_stochastic, {g}), Error);
  auto leaky_exit = a;
  leaky_exit(2, 2) = 0.9;
  EXPECT_THROW(PhonemeHmm("e", leaky_exit, {g}), Error);
  auto small_var = g;
  small_var.variance(3) = 1e-6;
  EXPECT_THROW(PhonemeHmm("v", a, {small_var}), Error);
  auto short_mean = g;
  short_mean.mean = Eigen::VectorXd::Zero(13);
  EXPECT_THROW(PhonemeHmm("d", a, {short_mean}), Error);
}

TEST(Viterbi, SingleObservationSinglePath) {
  const auto m = gaussian_model("a", 0.3);
  const auto obs = frames_of(Eigen::MatrixXd::Constant(1, kFeatureDim, 0.1));
  const double expected = std::log(1.0) +
                          oracle::gaussian_log_density(obs.values.row(0).transpose(), m.emission(1).mean,
                                                       m.emission(1).variance) +
                          std::log(0.5);
  EXPECT_NEAR(viterbi_score(m, obs), expected, 1e-9);
}

TEST(Viterbi, TwoStatesThreeFramesMatchesBruteForce) {
  std::mt19937_64 rng(21);
  const auto m = testgen::random_model(rng, 2);
  const auto obs = testgen::random_obs(rng, 3);
  EXPECT_NEAR(viterbi_score(m, obs), brute_force(m, obs), 1e-9);
}

TEST(Viterbi, Errors) {
  const auto m = gaussian_model("a", 0.0);
  try {
    viterbi_score(m, frames_of(Eigen::MatrixXd::Zero(4, 13)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    viterbi_score(m, frames_of(Eigen::MatrixXd::Zero(0, kFeatureDim)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyObservation);
  }
}

TEST(Viterbi, FixedTopologyNeedsFramesForEveryState) {
  // Two emitting states without a skip arc cannot emit a single frame.
  const auto m = gaussian_model("a", 0.0, 2);
  const auto one = frames_of(Eigen::MatrixXd::Zero(1, kFeatureDim));
  EXPECT_EQ(viterbi_score(m, one), kLogZero);
  EXPECT_TRUE(viterbi_decode(m, one).path.empty());
  const auto three = frames_of(Eigen::MatrixXd::Zero(3, kFeatureDim));
  const auto r = viterbi_decode(m, three);
  ASSERT_EQ(r.path.size(), 3u);
  EXPECT_EQ(r.path.front(), 1);
  EXPECT_EQ(r.path.back(), 2);
}

TEST(ViterbiProperty, MatchesBruteForceOnRandomModels) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 2;
    const auto m = testgen::random_model(rng, n);
    const auto obs = testgen::random_obs(rng, 1 + trial % 6);
    const double v = viterbi_score(m, obs);
    const double b = brute_force(m, obs);
    if (std::isinf(b)) {
      EXPECT_EQ(v, b);
    } else {
      EXPECT_NEAR(v, b, 1e-9 * std::max(1.0, std::abs(b)));
    }
  }
}

TEST(ViterbiProperty, ExactMeanNeverScoresBelowPerturbedMean) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(kFeatureDim, [&] { return g(rng); });
    const auto obs = frames_of(x.transpose().replicate(4, 1));
    Eigen::VectorXd var = Eigen::VectorXd::Constant(kFeatureDim, 0.7);
    const auto exact = PhonemeHmm::left_to_right("e", {DiagGaussian{x, var}});
    Eigen::VectorXd shifted = x + 0.1 * Eigen::VectorXd::NullaryExpr(kFeatureDim, [&] { return g(rng); });
    const auto perturbed = PhonemeHmm::left_to_right("p", {DiagGaussian{shifted, var}});
    EXPECT_GE(viterbi_score(exact, obs), viterbi_score(perturbed, obs));
  }
}

TEST(Recognize, SeparatedClusters) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  auto cluster = [&](double c, int frames) {
    FeatureMatrix m;
    m.values = Eigen::MatrixXd::NullaryExpr(frames, kFeatureDim, [&] { return c + g(rng); });
    return m;
  };
  HmmSet set;
  set.add(train_model("A", std::vector<FeatureMatrix>{cluster(0.0, 50)}, 1));
  set.add(train_model("B", std::vector<FeatureMatrix>{cluster(10.0, 50)}, 1));
  const auto r = recognize(set, cluster(0.0, 5));
  EXPECT_EQ(r.predicted, "A");
  EXPECT_GT(r.log_likelihoods.at("A"), r.log_likelihoods.at("B"));
  EXPECT_EQ(recognize(set, cluster(10.0, 5)).predicted, "B");
}

TEST(Recognize, TieBreaksToFirstLabel) {
  HmmSet set;
  set.add(gaussian_model("m_b", 0.0));
  set.add(gaussian_model("m_a", 0.0));
  EXPECT_EQ(recognize(set, frames_of(Eigen::MatrixXd::Zero(3, kFeatureDim))).predicted, "m_a");
}

TEST(Recognize, EmptySet) {
  try {
    recognize(HmmSet{}, frames_of(Eigen::MatrixXd::Zero(3, kFeatureDim)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyModelSet);
  }
}

TEST(RecognizeProperty, InsertionOrderInvariant) {
  std::mt19937_64 rng(17);
  std::vector<PhonemeHmm> models;
  for (int k = 0; k < 5; ++k) models.push_back(testgen::random_model(rng, 1, "p" + std::to_string(k)));
  models.push_back(gaussian_model("tie_b", 0.0));
  models.push_back(gaussian_model("tie_a", 0.0));
  for (int trial = 0; trial < 10; ++trial) {
    const auto obs = trial % 2 ? testgen::random_obs(rng, 4) : frames_of(Eigen::MatrixXd::Zero(4, kFeatureDim));
    HmmSet forward;
    for (const auto& m : models) forward.add(m);
    auto shuffled = models;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    HmmSet other;
    for (const auto& m : shuffled) other.add(m);
    EXPECT_EQ(recognize(forward, obs).predicted, recognize(other, obs).predicted);
  }
}

TEST(HmmSet, RejectsMixedTopology) {
  HmmSet set;
  set.add(gaussian_model("a", 0.0, 1));
  EXPECT_THROW(set.add(gaussian_model("b", 0.0, 2)), Error);
}

namespace {

std::vector<LabeledSegment> separable_corpus(std::mt19937_64& rng, int per_label) {
  std::normal_distribution<double> g;
  std::vector<LabeledSegment> out;
  for (auto group : {SpeakerGroup::Female, SpeakerGroup::Male}) {
    for (int label = 0; label < 3; ++label) {
      for (int k = 0; k < per_label; ++k) {
        LabeledSegment s;
        s.label = "ph" + std::to_string(label);
        s.segment_id = std::string(to_string(group)) + "_" + s.label + "_" + std::to_string(k);
        s.speaker_group = group;
        s.features.values = Eigen::MatrixXd::NullaryExpr(8, kFeatureDim, [&] { return 10.0 * label + g(rng); });
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace

TEST(EvaluateRates, SeparableCorpusIsPerfect) {
  std::mt19937_64 rng(5);
  const auto corpus = separable_corpus(rng, 10);
  for (std::size_t n : {1u, 2u}) {
    const auto r = evaluate_rates(corpus, n);
    ASSERT_EQ(r.cells.size(), 4u);
    EXPECT_EQ(r.cells[0].train_group, SpeakerGroup::Female);
    EXPECT_EQ(r.cells[0].test_group, SpeakerGroup::Female);
    EXPECT_EQ(r.cells[2].train_group, SpeakerGroup::Male);
    EXPECT_EQ(r.cells[2].test_group, SpeakerGroup::Female);
    for (const auto& c : r.cells) EXPECT_EQ(c.rate, 100.0);
    EXPECT_EQ(r.cells[0].total, 9u);  // 3 of 10 per phoneme held out
    EXPECT_EQ(r.cells[2].total, 30u);
  }
}

TEST(EvaluateRates, SinglePhonemeIsTriviallyPerfect) {
  std::mt19937_64 rng(5);
  auto corpus = separable_corpus(rng, 4);
  std::erase_if(corpus, [](const LabeledSegment& s) { return s.label != "ph1"; });
  for (const auto& c : evaluate_rates(corpus, 1).cells) EXPECT_EQ(c.rate, 100.0);
}

TEST(EvaluateRates, MissingGroupNamesCell) {
  std::mt19937_64 rng(5);
  auto corpus = separable_corpus(rng, 4);
  std::erase_if(corpus, [](const LabeledSegment& s) { return s.speaker_group == SpeakerGroup::Male; });
  try {
    evaluate_rates(corpus, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
    EXPECT_NE(std::string(e.what()).find("male/male"), std::string::npos) << e.what();
  }
}

TEST(EvaluateRates, CsvLayout) {
  std::mt19937_64 rng(5);
  const auto corpus = separable_corpus(rng, 4);
  const std::vector<RateMatrix> both = {evaluate_rates(corpus, 1), evaluate_rates(corpus, 2)};
  std::stringstream s;
  write_rate_csv(s, both);
  std::vector<std::string> lines;
  for (std::string line; std::getline(s, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "train_group,test_group,n_emitting,rate,correct,total");
  EXPECT_EQ(lines[1].rfind("female,female,1,100.00,", 0), 0u);
  EXPECT_EQ(lines[8].rfind("female,male,2,100.00,", 0), 0u);
}

TEST(ModelFile, RoundTripIsExact) {
  std::mt19937_64 rng(31);
  for (std::size_t n : {1u, 2u}) {
    HmmSet set;
    for (int k = 0; k < 3; ++k) set.add(testgen::random_model(rng, n, "lab" + std::to_string(k)));
    std::stringstream s;
    write_models(s, set);
    const auto back = read_models(s);
    ASSERT_EQ(back.size(), set.size());
    EXPECT_EQ(back.n_emitting(), n);
    for (const auto& [label, m] : set.models()) {
      const auto& b = back.models().at(label);
      EXPECT_EQ(b.transitions(), m.transitions());
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_EQ(b.emissions()[i].mean, m.emissions()[i].mean);
        EXPECT_EQ(b.emissions()[i].variance, m.emissions()[i].variance);
      }
    }
    std::stringstream again;
    write_models(again, back);
    s.clear();
    s.seekg(0);
    EXPECT_EQ(again.str(), s.str());
  }
}

TEST(ModelFile, MalformedInputs) {
  auto code_for = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_models(in);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_for(""), ErrorCode::MalformedModel);
  EXPECT_EQ(code_for("prosody-hmm 2\nmodels 0\n"), ErrorCode::MalformedModel);
  EXPECT_EQ(code_for("prosody-hmm 1\nmodels 1\nmodel a\nn_emitting 3\n"), ErrorCode::MalformedModel);
  EXPECT_EQ(code_for("prosody-hmm 1\nmodels 1\nmodel a\nn_emitting 1\ndim 13\n"), ErrorCode::MalformedModel);

  HmmSet set;
  set.add(gaussian_model("a", 0.0));
  std::stringstream s;
  write_models(s, set);
  std::string text = s.str();
  EXPECT_EQ(code_for(text.substr(0, text.size() - 4)), ErrorCode::MalformedModel);
  const auto pos = text.find("0.5 0.5");
  ASSERT_NE(pos, std::string::npos);
  std::string bad = text;
  bad.replace(pos, 7, "0.5 0.4");
  EXPECT_EQ(code_for(bad), ErrorCode::MalformedModel);
  std::istringstream ok(text);
  EXPECT_EQ(read_models(ok).size(), 1u);
}
