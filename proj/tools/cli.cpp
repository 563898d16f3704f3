#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "prosody/prosody.hpp"

namespace fs = std::filesystem;

namespace prosody::cli {
namespace {

struct Logger {
  std::ostream* err = &std::cerr;
  bool quiet = false;
  std::mutex mu;

  void info(const std::string& msg) {
    if (quiet) return;
    std::lock_guard lock(mu);
    *err << "prosody: " << msg << '\n';
  }
  void error(const std::string& msg) {
    std::lock_guard lock(mu);
    *err << "prosody: error: " << msg << '\n';
  }
};

struct Common {
  std::string manifest;
  std::string out_dir = ".";
  unsigned jobs = 0;
  std::optional<int> sample_rate;
};

unsigned worker_count(unsigned requested, std::size_t tasks) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

/// Evaluates fn(i) for i in [0, n) on a pool of threads. Results keep their
/// index; if several tasks throw, the lowest index is rethrown.
template <class T>
std::vector<T> parallel_map(std::size_t n, unsigned jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = worker_count(jobs, n);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

/// Wraps exceptions from one segment with its id so messages name the input.
template <class F>
auto for_segment(const ManifestEntry& e, F&& f) {
  try {
    return f();
  } catch (const Error& ex) {
    throw Error(ex.code(), "segment " + e.segment_id + ": " + ex.what());
  }
}

AudioBuffer load_segment(const CorpusManifest& m, const ManifestEntry& e, const std::optional<int>& expected_rate) {
  auto buf = load_wav(m.resolve(e));
  if (expected_rate && buf.sample_rate() != *expected_rate) {
    throw Error(ErrorCode::InvalidArgument, m.resolve(e).string() + ": sample rate " +
                                                std::to_string(buf.sample_rate()) + " Hz, expected " +
                                                std::to_string(*expected_rate) + " Hz");
  }
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text, Logger& log) {
  csv::write_file(path, text);
  log.info("wrote " + path.string());
}

std::vector<ManifestEntry> require_kind(const CorpusManifest& m, EntryKind kind, const std::string& manifest) {
  auto entries = m.of_kind(kind);
  if (entries.empty()) {
    throw Error(ErrorCode::EmptyInput, manifest + ": no " + std::string(to_string(kind)) + " entries");
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.segment_id < b.segment_id; });
  return entries;
}

std::vector<std::size_t> emitting_sizes(const std::string& spec) {
  if (spec == "1") return {1};
  if (spec == "2") return {2};
  if (spec == "both") return {1, 2};
  throw Error(ErrorCode::InvalidArgument, "--emitting-states must be 1, 2 or both");
}

// ---------------------------------------------------------------------------

struct IntonationOptions {
  Common common;
  std::string labels;
  double threshold = kDefaultPvqThreshold;
  std::string boundary = "threshold";
  double mark_boundary = kDefaultMarkBoundary;
  double f_min = PitchConfig{}.f_min;
  double f_max = PitchConfig{}.f_max;
};

int cmd_intonation(const IntonationOptions& o, std::ostream& out, Logger& log) {
  if (!(o.threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "--threshold must be positive");
  if (o.boundary != "threshold" && o.boundary != "mean") {
    throw Error(ErrorCode::InvalidArgument, "--boundary must be threshold or mean");
  }
  const auto manifest = load_manifest(o.common.manifest);
  const auto entries = require_kind(manifest, EntryKind::Presentation, o.common.manifest);
  std::vector<PerceptionRecord> labels;
  if (!o.labels.empty()) {
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries) ids.push_back(e.segment_id);
    labels = load_perception_labels(o.labels, std::span<const std::string>(ids));
  }
  const fs::path out_dir(o.common.out_dir);
  ensure_dir(out_dir);
  PitchConfig pitch;
  pitch.f_min = o.f_min;
  pitch.f_max = o.f_max;

  log.info("analysing " + std::to_string(entries.size()) + " presentation segment(s)");
  const auto reports = parallel_map<SegmentPvq>(entries.size(), o.common.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    return for_segment(e, [&] {
      const auto buf = load_segment(manifest, e, o.common.sample_rate);
      return SegmentPvq{e.segment_id, compute_pvq(estimate_pitch(buf, pitch), o.threshold)};
    });
  });

  std::optional<AgreementReport> agreement;
  double pvq_boundary = o.threshold;
  if (!labels.empty()) {
    if (o.boundary == "mean") pvq_boundary = mean_pvq(std::span<const SegmentPvq>(reports));
    agreement = evaluate_agreement(reports, labels, pvq_boundary, o.mark_boundary);
  }

  std::ostringstream table;
  write_intonation_csv(table, reports, agreement ? &*agreement : nullptr);
  write_text(out_dir / "intonation.csv", table.str(), log);
  if (agreement) {
    std::ostringstream summary;
    summary << "n_segments,n_disagreements,error_rate,pvq_boundary,mark_boundary\n"
            << csv::join({std::to_string(agreement->n_segments), std::to_string(agreement->n_disagreements),
                          csv::format_exact(agreement->error_rate), csv::format_exact(pvq_boundary),
                          csv::format_exact(o.mark_boundary)})
            << '\n';
    write_text(out_dir / "agreement.csv", summary.str(), log);
    out << "error_rate=" << csv::format_exact(agreement->error_rate) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FormantOptions {
  Common common;
  std::string method = "covariance";
  bool reference = false;
};

int cmd_formants(const FormantOptions& o, Logger& log) {
  FormantConfig cfg;
  if (o.method == "covariance") {
    cfg.method = LpcMethod::PulseExcludedCovariance;
  } else if (o.method == "autocorrelation") {
    cfg.method = LpcMethod::Autocorrelation;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--method must be covariance or autocorrelation");
  }
  const fs::path out_dir(o.common.out_dir);
  if (o.reference) {
    ensure_dir(out_dir);
    write_text(out_dir / "reference_formants.csv", reference_table_csv(), log);
    if (o.common.manifest.empty()) return 0;
  }
  if (o.common.manifest.empty()) throw Error(ErrorCode::InvalidArgument, "--manifest is required");
  const auto manifest = load_manifest(o.common.manifest);
  const auto entries = require_kind(manifest, EntryKind::Phoneme, o.common.manifest);
  ensure_dir(out_dir);
  log.info("estimating formants for " + std::to_string(entries.size()) + " phoneme segment(s)");
  const auto estimates = parallel_map<FormantEstimate>(entries.size(), o.common.jobs, [&](std::size_t i) {
    return for_segment(entries[i], [&] { return estimate_formants(load_segment(manifest, entries[i], o.common.sample_rate), cfg); });
  });

  std::ostringstream table;
  table << "segment_id,label,speaker_group,f1,f2,f3,b1,b2,b3,frames_used\n";
  std::vector<VowelChartEntry> chart;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& f = estimates[i];
    table << csv::join({e.segment_id, e.label, std::string(to_string(e.speaker_group)), csv::format_fixed(f.f1, 2),
                        csv::format_fixed(f.f2, 2), csv::format_fixed(f.f3, 2), csv::format_fixed(f.bandwidths[0], 2),
                        csv::format_fixed(f.bandwidths[1], 2), csv::format_fixed(f.bandwidths[2], 2),
                        std::to_string(f.frames_used)})
          << '\n';
    chart.push_back({e.label, e.speaker_group, f.f1, f.f2, f.f3});
  }
  write_text(out_dir / "formants.csv", table.str(), log);
  std::ostringstream vc;
  emit_vowel_chart(vc, chart);
  write_text(out_dir / "vowel_chart.csv", vc.str(), log);
  return 0;
}

// ---------------------------------------------------------------------------

struct FeatureOptions {
  Common common;
  std::string scheme = "mfcc";
  std::string kind = "phoneme";
};

std::vector<LabeledSegment> load_phoneme_features(const CorpusManifest& manifest, const std::string& name,
                                                   FeatureScheme scheme, const Common& common, Logger& log) {
  const auto entries = require_kind(manifest, EntryKind::Phoneme, name);
  log.info("extracting " + std::string(to_string(scheme)) + " features for " + std::to_string(entries.size()) +
           " phoneme segment(s)");
  return parallel_map<LabeledSegment>(entries.size(), common.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    return for_segment(e, [&] {
      return LabeledSegment{e.segment_id, e.label, e.speaker_group,
                            extract_features(load_segment(manifest, e, common.sample_rate), scheme)};
    });
  });
}

int cmd_features(const FeatureOptions& o, Logger& log) {
  const auto scheme = parse_feature_scheme(o.scheme);
  EntryKind kind;
  if (o.kind == "phoneme") {
    kind = EntryKind::Phoneme;
  } else if (o.kind == "presentation") {
    kind = EntryKind::Presentation;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--kind must be phoneme or presentation");
  }
  const auto manifest = load_manifest(o.common.manifest);
  const auto entries = require_kind(manifest, kind, o.common.manifest);
  const fs::path out_dir(o.common.out_dir);
  ensure_dir(out_dir);
  const auto shapes = parallel_map<Eigen::Index>(entries.size(), o.common.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    return for_segment(e, [&] {
      const auto m = extract_features(load_segment(manifest, e, o.common.sample_rate), scheme);
      std::ostringstream s;
      write_feature_csv(s, m);
      csv::write_file(out_dir / (e.segment_id + ".csv"), s.str());
      return m.frames();
    });
  });
  std::ostringstream index;
  index << "segment_id,label,speaker_group,frames,file\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    index << csv::join({entries[i].segment_id, entries[i].label, std::string(to_string(entries[i].speaker_group)),
                        std::to_string(shapes[i]), entries[i].segment_id + ".csv"})
          << '\n';
  }
  write_text(out_dir / "features_index.csv", index.str(), log);
  return 0;
}

// ---------------------------------------------------------------------------

struct HmmOptions {
  Common common;
  std::string scheme = "mfcc";
  std::string emitting = "both";
  std::string group = "all";
};

int cmd_hmm_train(const HmmOptions& o, Logger& log) {
  const auto sizes = emitting_sizes(o.emitting);
  const auto scheme = parse_feature_scheme(o.scheme);
  std::optional<SpeakerGroup> group;
  if (o.group != "all") group = parse_speaker_group(o.group);
  const auto manifest = load_manifest(o.common.manifest);
  const auto corpus = load_phoneme_features(manifest, o.common.manifest, scheme, o.common, log);
  std::vector<std::pair<std::string, FeatureMatrix>> labeled;
  for (const auto& s : corpus) {
    if (!group || s.speaker_group == *group) labeled.emplace_back(s.label, s.features);
  }
  if (labeled.empty()) throw Error(ErrorCode::InsufficientData, "no phoneme segments for group " + o.group);
  const fs::path out_dir(o.common.out_dir);
  ensure_dir(out_dir);
  for (std::size_t n : sizes) {
    const auto set = train_set(labeled, n);
    std::ostringstream s;
    write_models(s, set);
    write_text(out_dir / ("hmm_" + std::to_string(n) + ".txt"), s.str(), log);
  }
  return 0;
}

int cmd_hmm_eval(const HmmOptions& o, Logger& log) {
  const auto sizes = emitting_sizes(o.emitting);
  const auto scheme = parse_feature_scheme(o.scheme);
  const auto manifest = load_manifest(o.common.manifest);
  const auto corpus = load_phoneme_features(manifest, o.common.manifest, scheme, o.common, log);
  std::vector<RateMatrix> matrices;
  for (std::size_t n : sizes) {
    matrices.push_back(evaluate_rates(corpus, n));
    for (const auto& c : matrices.back().cells) {
      log.info(std::to_string(n) + "-emitting " + std::string(to_string(c.train_group)) + "/" +
               std::string(to_string(c.test_group)) + ": " + csv::format_fixed(c.rate, 2) + "%");
    }
  }
  const fs::path out_dir(o.common.out_dir);
  ensure_dir(out_dir);
  std::ostringstream s;
  write_rate_csv(s, matrices);
  write_text(out_dir / "rates.csv", s.str(), log);
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> results;
  std::string labels;
  std::string out_dir = ".";
  double mark_boundary = kDefaultMarkBoundary;
};

int cmd_report(const ReportOptions& o, Logger& log) {
  if (o.results.empty()) throw Error(ErrorCode::InvalidArgument, "--results is required");
  const auto labels = load_perception_labels(o.labels);
  std::map<std::string, double, std::less<>> marks;
  for (const auto& r : labels) marks[r.segment_id] = r.average_mark;

  const fs::path out_dir(o.out_dir);
  ensure_dir(out_dir);
  std::set<std::string> names;
  std::ostringstream bounds;
  bounds << "set,n_segments,mark_boundary,mean_pvq\n";
  for (const auto& spec : o.results) {
    std::string name;
    fs::path path;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      name = path.stem().string();
    }
    if (name.empty() || !names.insert(name).second) {
      throw Error(ErrorCode::InvalidArgument, "result set name '" + name + "' is empty or repeated; use NAME=PATH");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open results " + path.string());
    auto rows = read_intonation_csv(in, path.string());
    if (rows.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no result rows");
    std::sort(rows.begin(), rows.end(),
              [](const IntonationRow& a, const IntonationRow& b) { return a.segment_id < b.segment_id; });

    std::ostringstream scatter;
    scatter << "segment_id,average_mark,pvq\n";
    std::vector<PvqReport> reports;
    for (const auto& r : rows) {
      const auto it = marks.find(r.segment_id);
      if (it == marks.end()) {
        throw Error(ErrorCode::MissingLabel, path.string() + ": no perception label for " + r.segment_id);
      }
      scatter << csv::join({r.segment_id, csv::format_exact(it->second), csv::format_exact(r.report.pvq)}) << '\n';
      reports.push_back(r.report);
    }
    write_text(out_dir / ("scatter_" + name + ".csv"), scatter.str(), log);
    bounds << csv::join({name, std::to_string(rows.size()), csv::format_exact(o.mark_boundary),
                         csv::format_exact(mean_pvq(std::span<const PvqReport>(reports)))})
           << '\n';
  }
  write_text(out_dir / "boundaries.csv", bounds.str(), log);
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out_dir = ".";
  int sample_rate = 16000;
  double duration = 6.0;
  std::size_t per_label = 6;
  std::uint64_t seed = 20240601;
};

void write_phoneme_corpus(const fs::path& dir, synth::CorpusKind kind, const SynthOptions& o, Logger& log) {
  ensure_dir(dir);
  const auto clips = synth::phoneme_corpus(kind, o.sample_rate, o.per_label, o.seed + static_cast<unsigned>(kind));
  CorpusManifest m;
  for (const auto& c : clips) {
    write_wav(dir / (c.segment_id + ".wav"), c.audio);
    m.entries.push_back({c.segment_id, c.segment_id + ".wav", EntryKind::Phoneme, c.label,
                         parse_speaker_group(c.speaker_group)});
  }
  write_text(dir / "manifest.csv", serialize_manifest(m), log);
}

int cmd_synth(const SynthOptions& o, Logger& log) {
  const fs::path out_dir(o.out_dir);
  const fs::path pres = out_dir / "intonation";
  ensure_dir(pres);
  write_wav(pres / "monotone.wav", synth::intonation_fixture(synth::IntonationStyle::Flat, o.sample_rate, o.duration));
  write_wav(pres / "dynamic.wav", synth::intonation_fixture(synth::IntonationStyle::Lively, o.sample_rate, o.duration));
  CorpusManifest m;
  m.entries.push_back({"p1_monotone", "monotone.wav", EntryKind::Presentation, "monotone", SpeakerGroup::Male});
  m.entries.push_back({"p2_dynamic", "dynamic.wav", EntryKind::Presentation, "dynamic", SpeakerGroup::Male});
  write_text(pres / "manifest.csv", serialize_manifest(m), log);
  write_text(pres / "labels.csv",
             "segment_id,rater_id,mark\n"
             "p1_monotone,r1,1\np1_monotone,r2,1\np1_monotone,r3,2\n"
             "p2_dynamic,r1,3\np2_dynamic,r2,3\np2_dynamic,r3,2\n",
             log);
  write_phoneme_corpus(out_dir / "separable", synth::CorpusKind::Separable, o, log);
  write_phoneme_corpus(out_dir / "two_phase", synth::CorpusKind::TwoPhase, o, log);
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool manifest_required = true) {
  auto* opt = cmd->add_option("--manifest", c.manifest, "Corpus manifest CSV (segment_id,path,kind,label,speaker_group)");
  if (manifest_required) opt->required();
  cmd->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--sample-rate", c.sample_rate, "Reject audio whose sample rate differs (Hz)");
  cmd->add_option("--jobs", c.jobs, "Worker threads (0 = one per core)")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Logger log;
  log.err = &err;

  CLI::App app{"Prosody analysis: pitch variation, formants, cepstral features and phoneme HMMs"};
  app.name(args.empty() ? "prosody" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", log.quiet, "Suppress progress messages");

  IntonationOptions into;
  auto* c_into = app.add_subcommand("intonation", "Per-segment pitch variation quotient and perception agreement");
  add_common(c_into, into.common);
  c_into->add_option("--labels", into.labels, "Perception marks CSV (segment_id,rater_id,mark)");
  c_into->add_option("--threshold", into.threshold, "Monotone/dynamic boundary on the quotient")->capture_default_str();
  c_into->add_option("--boundary", into.boundary, "Agreement boundary: threshold or mean (mean quotient of the set)")
      ->capture_default_str();
  c_into->add_option("--mark-boundary", into.mark_boundary, "Perceived-liveliness boundary on average marks")
      ->capture_default_str();
  c_into->add_option("--f-min", into.f_min, "Lowest pitch searched (Hz)")->capture_default_str();
  c_into->add_option("--f-max", into.f_max, "Highest pitch searched (Hz)")->capture_default_str();

  FormantOptions form;
  auto* c_form = app.add_subcommand("formants", "F1-F3 of phoneme segments and vowel chart data");
  add_common(c_form, form.common, false);
  c_form->add_option("--method", form.method, "LPC method: covariance or autocorrelation")->capture_default_str();
  c_form->add_flag("--reference", form.reference, "Also write the reference formant table");

  FeatureOptions feat;
  auto* c_feat = app.add_subcommand("features", "Export 39-dimensional feature matrices as CSV");
  add_common(c_feat, feat.common);
  c_feat->add_option("--scheme", feat.scheme, "mfcc or plp")->capture_default_str();
  c_feat->add_option("--kind", feat.kind, "Manifest rows to process: phoneme or presentation")->capture_default_str();

  HmmOptions train;
  auto* c_train = app.add_subcommand("hmm-train", "Train one HMM per phoneme label and save the model set");
  add_common(c_train, train.common);
  c_train->add_option("--scheme", train.scheme, "mfcc or plp")->capture_default_str();
  c_train->add_option("--emitting-states", train.emitting, "1, 2 or both")->capture_default_str();
  c_train->add_option("--group", train.group, "Training speakers: male, female or all")->capture_default_str();

  HmmOptions eval;
  auto* c_eval = app.add_subcommand("hmm-eval", "Recognition rates for every train/test speaker-group pair");
  add_common(c_eval, eval.common);
  c_eval->add_option("--scheme", eval.scheme, "mfcc or plp")->capture_default_str();
  c_eval->add_option("--emitting-states", eval.emitting, "1, 2 or both")->capture_default_str();

  ReportOptions rep;
  auto* c_rep = app.add_subcommand("report", "Scatter and boundary data from intonation results");
  c_rep->add_option("--results", rep.results, "intonation.csv per sampling rate, optionally NAME=PATH")->required();
  c_rep->add_option("--labels", rep.labels, "Perception marks CSV")->required();
  c_rep->add_option("--out", rep.out_dir, "Output directory")->capture_default_str();
  c_rep->add_option("--mark-boundary", rep.mark_boundary, "Average-mark boundary line")->capture_default_str();

  SynthOptions syn;
  auto* c_syn = app.add_subcommand("synth-fixtures", "Write the synthetic fixture corpora");
  c_syn->add_option("--out", syn.out_dir, "Output directory")->capture_default_str();
  c_syn->add_option("--sample-rate", syn.sample_rate, "Sample rate (Hz)")->capture_default_str();
  c_syn->add_option("--duration", syn.duration, "Presentation fixture length (s)")->capture_default_str();
  c_syn->add_option("--per-label", syn.per_label, "Phoneme clips per label and speaker group")->capture_default_str();
  c_syn->add_option("--seed", syn.seed, "Random seed")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_into->parsed()) return cmd_intonation(into, out, log);
    if (c_form->parsed()) return cmd_formants(form, log);
    if (c_feat->parsed()) return cmd_features(feat, log);
    if (c_train->parsed()) return cmd_hmm_train(train, log);
    if (c_eval->parsed()) return cmd_hmm_eval(eval, log);
    if (c_rep->parsed()) return cmd_report(rep, log);
    if (c_syn->parsed()) return cmd_synth(syn, log);
  } catch (const Error& e) {
    log.error(e.what());
    return is_input_error(e.code()) ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    log.error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log.error(e.what());
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace prosody::cli
