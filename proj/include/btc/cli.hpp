#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btc/analysis.hpp"
#include "btc/dataset.hpp"
#include "btc/model.hpp"
#include "btc/train.hpp"
#include "btc/uap.hpp"
#include "btc/video.hpp"

namespace btc::cli {

inline std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = std::stoi(item, &used);
    if (used != item.size()) throw std::runtime_error("bad integer '" + item + "' in list '" + csv + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("empty integer list '" + csv + "'");
  return out;
}

// Every run leaves a replayable record of its fully-resolved configuration:
// <out>/run-config.txt when out is a directory, <out>.run-config.txt otherwise.
inline void write_run_config(const std::filesystem::path& out,
                             const std::string& subcommand,
                             const std::vector<std::pair<std::string, std::string>>& kv) {
  std::filesystem::path target =
      std::filesystem::is_directory(out) ? out / "run-config.txt" : std::filesystem::path(out.string() + ".run-config.txt");
  std::ofstream os(target, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write run config: " + target.string());
  os << "subcommand = " << subcommand << "\n";
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

struct UapFlags {
  std::string images;
  std::uint64_t extractor_seed = 1;
  int layer = 2;
  int frames = 32;
  double eps255 = 16.0;
  double alpha = 0.004;
  int k = 4;
  int j_max = 2;
  std::string j_list;
  int epochs = 5;
  std::uint64_t seed = 1;
  bool no_temporal = false;
  bool update_neighbors = false;

  void attach(CLI::App* cmd, bool images_required = true) {
    auto* img = cmd->add_option("--images", images, "image-set manifest used for optimization");
    if (images_required) img->required();
    cmd->add_option("--extractor-seed", extractor_seed, "seed of the source image model");
    cmd->add_option("--layer", layer, "feature tap layer l");
    cmd->add_option("--frames", frames, "UAP frame count N");
    cmd->add_option("--eps", eps255, "perturbation budget on the 0-255 scale");
    cmd->add_option("--alpha", alpha, "Adam step size");
    cmd->add_option("--k", k, "number of random noises K");
    cmd->add_option("--j-max", j_max, "symmetric neighbor set {-m..-1,1..m}");
    cmd->add_option("--j", j_list, "explicit comma-separated offset set, overrides --j-max");
    cmd->add_option("--epochs", epochs, "passes over the image set");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_flag("--no-temporal", no_temporal, "disable the temporal similarity term");
    cmd->add_flag("--update-neighbors", update_neighbors, "also apply neighbor-frame gradients each step");
  }

  BtcConfig to_config() const {
    BtcConfig cfg;
    cfg.noise_count = k;
    cfg.offsets = j_list.empty() ? symmetric_offsets(j_max) : parse_int_list(j_list);
    cfg.layer = layer;
    cfg.alpha = static_cast<float>(alpha);
    cfg.epsilon = static_cast<float>(eps255 / 255.0);
    cfg.frames = frames;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.temporal_enabled = !no_temporal;
    cfg.update_neighbors = update_neighbors;
    cfg.validate();
    return cfg;
  }
};

inline std::vector<std::pair<std::string, std::string>> config_kv(const BtcConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(config_to_text(cfg));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return kv;
}

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"BTC-UAP: video universal adversarial perturbations from an image model"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic video corpus");
  int gd_classes = 8, gd_clips = 20, gd_frames = 16, gd_size = 32;
  std::uint64_t gd_seed = 42;
  std::string gd_out;
  gen->add_option("--classes", gd_classes, "number of classes");
  gen->add_option("--clips-per-class", gd_clips, "clips per class");
  gen->add_option("--frames", gd_frames, "frames per clip (T)");
  gen->add_option("--size", gd_size, "square frame size in px");
  gen->add_option("--seed", gd_seed, "generation seed");
  gen->add_option("--out", gd_out, "output directory")->required();

  // train-classifier
  auto* train = app.add_subcommand("train-classifier", "train the toy video classifier head");
  std::string tc_data, tc_out;
  int tc_epochs = 30;
  std::uint64_t tc_seed = 7;
  double tc_lr = 0.05, tc_val = 0.25;
  train->add_option("--data", tc_data, "dataset manifest")->required();
  train->add_option("--epochs", tc_epochs, "full-batch Adam steps");
  train->add_option("--seed", tc_seed, "extractor + split seed");
  train->add_option("--lr", tc_lr, "learning rate");
  train->add_option("--val-fraction", tc_val, "held-out fraction per class");
  train->add_option("--out", tc_out, "model archive path")->required();

  // optimize-uap
  auto* opt = app.add_subcommand("optimize-uap", "optimize a BTC-UAP on an image set");
  UapFlags uf;
  std::string ou_out;
  uf.attach(opt);
  opt->add_option("--out", ou_out, "UAP archive path")->required();

  // attack
  auto* atk = app.add_subcommand("attack", "evaluate a UAP against a model on a clip set");
  std::string at_uap, at_videos, at_model, at_report;
  int at_shift = 0;
  atk->add_option("--uap", at_uap, "UAP archive")->required();
  atk->add_option("--videos", at_videos, "clip manifest")->required();
  atk->add_option("--model", at_model, "target model archive")->required();
  atk->add_option("--shift", at_shift, "temporal shift of the UAP");
  atk->add_option("--report", at_report, "output JSON report path")->required();

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "frame-similarity matrix of one clip (CSV + PGM)");
  std::string hm_video, hm_uap, hm_out;
  std::uint64_t hm_seed = 1;
  int hm_layer = 2;
  heat->add_option("--video", hm_video, "clip tensor file (BTCT)")->required();
  heat->add_option("--extractor-seed", hm_seed, "seed of the image model used for features");
  heat->add_option("--layer", hm_layer, "feature tap layer l");
  heat->add_option("--uap", hm_uap, "optional UAP archive; measures the adversarial clip");
  heat->add_option("--out", hm_out, "output path prefix")->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "re-optimize and evaluate a UAP over a parameter grid");
  UapFlags af;
  std::string ab_sweep, ab_grid, ab_videos, ab_model, ab_out;
  af.attach(abl);
  abl->add_option("--sweep", ab_sweep, "one of k|j|n|shift|temporal")->required();
  abl->add_option("--grid", ab_grid, "comma-separated sweep values")->required();
  abl->add_option("--videos", ab_videos, "evaluation clip manifest")->required();
  abl->add_option("--model", ab_model, "target model archive")->required();
  abl->add_option("--out", ab_out, "output CSV path")->required();

  std::vector<const char*> argv;
  argv.push_back("btc");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::endl;
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::endl;
    return 1;
  }

  try {
    if (gen->parsed()) {
      GenerationParams gp;
      gp.classes = gd_classes;
      gp.clips_per_class = gd_clips;
      gp.frames = gd_frames;
      gp.height = gd_size;
      gp.width = gd_size;
      DatasetManifest m = generate_dataset(gp, gd_seed, gd_out);
      write_run_config(gd_out, "gen-data",
                       {{"classes", std::to_string(gd_classes)},
                        {"clips_per_class", std::to_string(gd_clips)},
                        {"frames", std::to_string(gd_frames)},
                        {"size", std::to_string(gd_size)},
                        {"seed", std::to_string(gd_seed)},
                        {"out", gd_out}});
      std::cout << "wrote " << m.clips().size() << " clips and " << m.images().size() << " images under " << gd_out
                << std::endl;
      return 0;
    }

    if (train->parsed()) {
      DatasetManifest data = load_manifest(tc_data);
      TrainReport rep = train_classifier(data, tc_epochs, tc_seed, static_cast<float>(tc_lr),
                                         static_cast<float>(tc_val));
      save_model(rep.model, tc_out);
      write_run_config(tc_out, "train-classifier",
                       {{"data", tc_data},
                        {"epochs", std::to_string(tc_epochs)},
                        {"seed", std::to_string(tc_seed)},
                        {"lr", std::to_string(tc_lr)},
                        {"val_fraction", std::to_string(tc_val)},
                        {"out", tc_out}});
      std::cout << "train accuracy " << rep.train_accuracy << " (" << rep.train_count << " clips), validation accuracy "
                << rep.val_accuracy << " (" << rep.val_count << " clips), model saved to " << tc_out << std::endl;
      return 0;
    }

    if (opt->parsed()) {
      BtcConfig cfg = uf.to_config();
      DatasetManifest manifest = load_manifest(uf.images);
      FeatureExtractorSpec spec;
      {
        std::vector<Tensor> images = load_images(manifest);
        if (images.empty()) throw std::runtime_error("manifest has no image entries: " + uf.images);
        spec = build_feature_extractor(uf.extractor_seed, images.front().shape());
        OptimizeResult result = optimize_uap(images, spec, cfg);
        save_uap(result.state, cfg, ou_out);
        for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e)
          std::cout << "epoch " << (e + 1) << " mean loss " << result.epoch_mean_loss[e] << std::endl;
        std::cout << "optimized " << result.steps << " steps, |delta|_inf = " << result.state.delta.max_abs()
                  << ", saved to " << ou_out << std::endl;
      }
      auto kv = config_kv(cfg);
      kv.emplace_back("images", uf.images);
      kv.emplace_back("extractor_seed", std::to_string(uf.extractor_seed));
      kv.emplace_back("out", ou_out);
      write_run_config(ou_out, "optimize-uap", kv);
      return 0;
    }

    if (atk->parsed()) {
      UapState state = load_uap(at_uap);
      VideoClassifierModel model = load_model(at_model);
      DatasetManifest videos = load_manifest(at_videos);
      std::vector<VideoClip> clips = load_clips(videos);
      AttackReport report = attack_success_rate(model, clips, state, at_shift);
      report.model_id = at_model;
      report.uap_id = at_uap;
      report.config["videos"] = at_videos;
      report.config["shift"] = std::to_string(at_shift);
      write_report_json(report, at_report);
      write_run_config(at_report, "attack",
                       {{"uap", at_uap},
                        {"videos", at_videos},
                        {"model", at_model},
                        {"shift", std::to_string(at_shift)},
                        {"report", at_report}});
      std::cout << "asr " << report.asr << ", clean accuracy " << report.clean_accuracy << " over "
                << report.clips_evaluated << " clips (shift " << report.shift << ")" << std::endl;
      return 0;
    }

    if (heat->parsed()) {
      VideoClip clip;
      clip.frames = deserialize_tensor(hm_video);
      if (clip.frames.rank() != 4) throw std::runtime_error("clip tensor must be rank 4: " + hm_video);
      FeatureExtractorSpec spec =
          build_feature_extractor(hm_seed, {clip.frames.dim(1), clip.frames.dim(2), clip.frames.dim(3)});
      SimilarityMatrix matrix;
      if (hm_uap.empty()) {
        matrix = similarity_matrix(clip, spec, hm_layer);
      } else {
        UapState state = load_uap(hm_uap);
        AppliedPerturbation pert = repeat_uap(state, clip.frames.dim(0));
        matrix = similarity_matrix(clip, spec, hm_layer, &pert);
      }
      write_matrix_csv(matrix, hm_out + ".csv");
      write_matrix_pgm(matrix, hm_out + ".pgm");
      write_run_config(hm_out, "heatmap",
                       {{"video", hm_video},
                        {"extractor_seed", std::to_string(hm_seed)},
                        {"layer", std::to_string(hm_layer)},
                        {"uap", hm_uap.empty() ? "(none)" : hm_uap},
                        {"subject", matrix.subject},
                        {"out", hm_out}});
      std::cout << "wrote " << hm_out << ".csv and " << hm_out << ".pgm (" << matrix.subject << ", mean neighbor "
                << mean_neighbor_similarity(matrix) << ")" << std::endl;
      return 0;
    }

    if (abl->parsed()) {
      BtcConfig base = af.to_config();
      SweepKind kind;
      if (ab_sweep == "k")
        kind = SweepKind::K;
      else if (ab_sweep == "j")
        kind = SweepKind::JMax;
      else if (ab_sweep == "n")
        kind = SweepKind::N;
      else if (ab_sweep == "shift")
        kind = SweepKind::Shift;
      else if (ab_sweep == "temporal")
        kind = SweepKind::Temporal;
      else {
        std::cerr << "unknown sweep '" << ab_sweep << "' (expected k|j|n|shift|temporal)" << std::endl;
        return 1;
      }
      std::vector<int> grid = parse_int_list(ab_grid);
      DatasetManifest images = load_manifest(af.images);
      std::vector<Tensor> image_set = load_images(images);
      if (image_set.empty()) throw std::runtime_error("manifest has no image entries: " + af.images);
      FeatureExtractorSpec spec = build_feature_extractor(af.extractor_seed, image_set.front().shape());
      VideoClassifierModel model = load_model(ab_model);
      std::vector<VideoClip> clips = load_clips(load_manifest(ab_videos));
      std::vector<AblationRow> rows = ablation_run(kind, grid, base, image_set, spec, model, clips);
      write_ablation_csv(rows, ab_out);
      auto kv = config_kv(base);
      kv.emplace_back("sweep", ab_sweep);
      kv.emplace_back("grid", ab_grid);
      kv.emplace_back("images", af.images);
      kv.emplace_back("videos", ab_videos);
      kv.emplace_back("model", ab_model);
      kv.emplace_back("out", ab_out);
      write_run_config(ab_out, "ablate", kv);
      for (const auto& row : rows)
        std::cout << row.sweep << "=" << row.setting << "  asr " << row.asr << "  loss " << row.final_mean_loss
                  << std::endl;
      return 0;
    }
  } catch (const SerializationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}

}  // namespace btc::cli
