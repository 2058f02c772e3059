#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/parallel.hpp"
#include "btc/tensor.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"

namespace btc {

struct SimilarityMatrix {
  Tensor values;  // T x T in [-1, 1]
  int layer = 0;
  std::string subject;  // "clean" or "adversarial"

  int frame_count() const { return values.dim(0); }
  float at(int i, int j) const { return values[static_cast<std::size_t>(i) * values.dim(1) + j]; }
};

inline double cosine_flat(const Tensor& a, const Tensor& b) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot / (na * nb);
}

// Pairwise frame-feature similarity of the (optionally perturbed) clip.
inline SimilarityMatrix similarity_matrix(const VideoClip& clip, const FeatureExtractorSpec& spec, int layer,
                                          const AppliedPerturbation* pert = nullptr) {
  const VideoClip* subject = &clip;
  VideoClip adv;
  if (pert != nullptr) {
    adv = apply_uap(clip, *pert);
    subject = &adv;
  }
  const int t_count = subject->frames.dim(0);
  std::vector<Tensor> feats(t_count);
  for (int t = 0; t < t_count; ++t) feats[t] = extract_features(spec, subject->frames.slice_frame(t), layer);

  SimilarityMatrix m;
  m.layer = layer;
  m.subject = pert == nullptr ? "clean" : "adversarial";
  m.values = Tensor({t_count, t_count});
  for (int i = 0; i < t_count; ++i) {
    m.values[static_cast<std::size_t>(i) * t_count + i] = static_cast<float>(cosine_flat(feats[i], feats[i]));
    for (int j = i + 1; j < t_count; ++j) {
      const float s = static_cast<float>(cosine_flat(feats[i], feats[j]));
      m.values[static_cast<std::size_t>(i) * t_count + j] = s;
      m.values[static_cast<std::size_t>(j) * t_count + i] = s;
    }
  }
  return m;
}

// Mean of the |i-j| = 1 entries.
inline double mean_neighbor_similarity(const SimilarityMatrix& m) {
  const int t_count = m.frame_count();
  double acc = 0.0;
  for (int i = 0; i + 1 < t_count; ++i) acc += m.at(i, i + 1);
  return acc / static_cast<double>(t_count - 1);
}

// Elementwise mean of per-clip matrices (clips must share T).
inline SimilarityMatrix mean_similarity_matrix(const std::vector<SimilarityMatrix>& mats) {
  if (mats.empty()) throw std::invalid_argument("mean_similarity_matrix: empty input");
  SimilarityMatrix out = mats.front();
  Tensor acc(out.values.shape());
  for (const auto& m : mats) {
    if (!m.values.same_shape(acc)) throw std::invalid_argument("mean_similarity_matrix: mixed frame counts");
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += m.values[i];
  }
  const float inv = 1.0f / static_cast<float>(mats.size());
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] *= inv;
  out.values = std::move(acc);
  return out;
}

struct AttackReport {
  double asr = 0.0;
  std::vector<double> per_class_asr;
  double clean_accuracy = 0.0;
  int clips_evaluated = 0;
  int shift = 0;
  std::string model_id;
  std::string uap_id;
  std::map<std::string, std::string> config;
};

// ASR over ALL evaluated clips (misclassification rate of the adversarial
// clips); clean accuracy on the same clips is reported alongside so the
// initially-correct-only convention can be derived.
inline AttackReport attack_success_rate(const VideoClassifierModel& model, const std::vector<VideoClip>& clips,
                                        const UapState& state, int shift = 0) {
  if (clips.empty()) throw std::invalid_argument("attack_success_rate: empty clip set");
  std::map<int, AppliedPerturbation> by_length;
  for (const auto& clip : clips) {
    const int t_count = clip.frames.dim(0);
    if (!by_length.count(t_count)) by_length.emplace(t_count, repeat_shifted(state, t_count, shift));
  }

  struct ClipOutcome {
    bool clean_correct = false;
    bool adv_wrong = false;
    int label = 0;
  };
  std::vector<ClipOutcome> outcomes(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    const VideoClip& clip = clips[i];
    const AppliedPerturbation& pert = by_length.at(clip.frames.dim(0));
    const int clean_pred = classify_video(model, clip.frames).label;
    const int adv_pred = classify_video(model, apply_uap(clip, pert).frames).label;
    outcomes[i] = {clean_pred == clip.label, adv_pred != clip.label, clip.label};
  });

  AttackReport report;
  report.shift = shift;
  report.clips_evaluated = static_cast<int>(clips.size());
  std::map<int, std::pair<int, int>> per_class;  // label -> (wrong, total)
  int clean_correct = 0, adv_wrong = 0;
  for (const auto& o : outcomes) {
    clean_correct += o.clean_correct ? 1 : 0;
    adv_wrong += o.adv_wrong ? 1 : 0;
    auto& [w, t] = per_class[o.label];
    w += o.adv_wrong ? 1 : 0;
    t += 1;
  }
  report.asr = static_cast<double>(adv_wrong) / static_cast<double>(clips.size());
  report.clean_accuracy = static_cast<double>(clean_correct) / static_cast<double>(clips.size());
  const int max_label = per_class.empty() ? 0 : per_class.rbegin()->first;
  report.per_class_asr.assign(max_label + 1, 0.0);
  for (const auto& [label, wt] : per_class)
    report.per_class_asr[label] = static_cast<double>(wt.first) / static_cast<double>(wt.second);
  return report;
}

struct ShiftSweepResult {
  std::vector<AttackReport> reports;
  double spread = 0.0;  // max - min ASR
  double stddev = 0.0;
};

inline ShiftSweepResult shift_invariance_sweep(const VideoClassifierModel& model,
                                               const std::vector<VideoClip>& clips, const UapState& state,
                                               const std::vector<int>& shifts) {
  ShiftSweepResult result;
  double lo = 1.0, hi = 0.0, sum = 0.0, sumsq = 0.0;
  for (int s : shifts) {
    AttackReport r = attack_success_rate(model, clips, state, s);
    lo = std::min(lo, r.asr);
    hi = std::max(hi, r.asr);
    sum += r.asr;
    sumsq += r.asr * r.asr;
    result.reports.push_back(std::move(r));
  }
  if (!shifts.empty()) {
    const double n = static_cast<double>(shifts.size());
    result.spread = hi - lo;
    result.stddev = std::sqrt(std::max(0.0, sumsq / n - (sum / n) * (sum / n)));
  }
  return result;
}

// ---- ablation machinery ----

enum class SweepKind { K, JMax, N, Shift, Temporal };

inline const char* sweep_name(SweepKind k) {
  switch (k) {
    case SweepKind::K: return "k";
    case SweepKind::JMax: return "j";
    case SweepKind::N: return "n";
    case SweepKind::Shift: return "shift";
    case SweepKind::Temporal: return "temporal";
  }
  return "?";
}

struct AblationRow {
  std::string sweep;
  int setting = 0;
  int k = 0;
  std::string offsets;
  int n = 0;
  int shift = 0;
  bool temporal = true;
  double final_mean_loss = 0.0;
  double asr = 0.0;
  double clean_accuracy = 0.0;
};

inline std::string offsets_to_string(const std::vector<int>& offsets) {
  std::string s;
  for (std::size_t i = 0; i < offsets.size(); ++i) s += (i ? "," : "") + std::to_string(offsets[i]);
  return s;
}

// Re-optimizes one UAP per grid cell with identical seeds; the shift sweep
// evaluates the (identical) base-config UAP at each shift instead of
// re-running the same optimization.
inline std::vector<AblationRow> ablation_run(SweepKind kind, const std::vector<int>& grid, const BtcConfig& base,
                                             const std::vector<Tensor>& images, const FeatureExtractorSpec& spec,
                                             const VideoClassifierModel& model,
                                             const std::vector<VideoClip>& eval_clips) {
  if (grid.empty()) throw std::invalid_argument("ablation_run: empty grid");
  std::vector<AblationRow> rows;

  auto run_cell = [&](const BtcConfig& cfg, int setting, int shift) {
    OptimizeResult opt = optimize_uap(images, spec, cfg);
    AttackReport rep = attack_success_rate(model, eval_clips, opt.state, shift);
    AblationRow row;
    row.sweep = sweep_name(kind);
    row.setting = setting;
    row.k = cfg.noise_count;
    row.offsets = cfg.temporal_enabled ? offsets_to_string(cfg.offsets) : "";
    row.n = cfg.frames;
    row.shift = shift;
    row.temporal = cfg.temporal_enabled;
    row.final_mean_loss = opt.epoch_mean_loss.empty() ? 0.0 : opt.epoch_mean_loss.back();
    row.asr = rep.asr;
    row.clean_accuracy = rep.clean_accuracy;
    rows.push_back(std::move(row));
  };

  if (kind == SweepKind::Shift) {
    OptimizeResult opt = optimize_uap(images, spec, base);
    for (int s : grid) {
      AttackReport rep = attack_success_rate(model, eval_clips, opt.state, s);
      AblationRow row;
      row.sweep = sweep_name(kind);
      row.setting = s;
      row.k = base.noise_count;
      row.offsets = offsets_to_string(base.offsets);
      row.n = base.frames;
      row.shift = s;
      row.temporal = base.temporal_enabled;
      row.final_mean_loss = opt.epoch_mean_loss.empty() ? 0.0 : opt.epoch_mean_loss.back();
      row.asr = rep.asr;
      row.clean_accuracy = rep.clean_accuracy;
      rows.push_back(std::move(row));
    }
    return rows;
  }

  for (int value : grid) {
    BtcConfig cfg = base;
    switch (kind) {
      case SweepKind::K:
        cfg.noise_count = value;
        break;
      case SweepKind::JMax:
        cfg.offsets = clamp_offsets(symmetric_offsets(value), cfg.frames);
        break;
      case SweepKind::N:
        cfg.frames = value;
        cfg.offsets = clamp_offsets(base.offsets, value);
        break;
      case SweepKind::Temporal:
        cfg.temporal_enabled = (value != 0);
        break;
      case SweepKind::Shift:
        break;
    }
    run_cell(cfg, value, 0);
  }
  return rows;
}

// ---- emission: JSON reports, CSV tables, PGM heatmaps ----

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline nlohmann::ordered_json report_to_json(const AttackReport& r) {
  nlohmann::ordered_json j;
  j["asr"] = r.asr;
  j["clean_accuracy"] = r.clean_accuracy;
  j["clips_evaluated"] = r.clips_evaluated;
  j["shift"] = r.shift;
  j["per_class_asr"] = r.per_class_asr;
  j["model_id"] = r.model_id;
  j["uap_id"] = r.uap_id;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  return j;
}

inline void write_report_json(const AttackReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report: " + path.string());
  os << report_to_json(r).dump(2) << "\n";
}

inline std::string matrix_to_csv(const SimilarityMatrix& m) {
  std::string out;
  const int t_count = m.frame_count();
  for (int i = 0; i < t_count; ++i) {
    for (int j = 0; j < t_count; ++j) {
      if (j) out += ',';
      out += fmt6(m.at(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_matrix_csv(const SimilarityMatrix& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write csv: " + path.string());
  os << matrix_to_csv(m);
}

// P5 grayscale, similarity s mapped to round(255 * (s + 1) / 2).
inline void write_matrix_pgm(const SimilarityMatrix& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write pgm: " + path.string());
  const int t_count = m.frame_count();
  os << "P5\n" << t_count << " " << t_count << "\n255\n";
  for (int i = 0; i < t_count; ++i)
    for (int j = 0; j < t_count; ++j) {
      const double s = std::clamp(static_cast<double>(m.at(i, j)), -1.0, 1.0);
      const unsigned char px = static_cast<unsigned char>(std::lround(255.0 * (s + 1.0) / 2.0));
      os.put(static_cast<char>(px));
    }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "sweep,setting,k,j,n,shift,temporal,final_mean_loss,asr,clean_accuracy\n";
  for (const auto& r : rows) {
    out += r.sweep + ',' + std::to_string(r.setting) + ',' + std::to_string(r.k) + ',';
    out += '"' + r.offsets + "\",";
    out += std::to_string(r.n) + ',' + std::to_string(r.shift) + ',' + (r.temporal ? "1" : "0") + ',';
    out += fmt6(r.final_mean_loss) + ',' + fmt6(r.asr) + ',' + fmt6(r.clean_accuracy) + '\n';
  }
  return out;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write csv: " + path.string());
  os << ablation_csv(rows);
}

}  // namespace btc
