#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "spasvc/archive.hpp"
#include "spasvc/config.hpp"
#include "spasvc/ddsp.hpp"
#include "spasvc/diffusion.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/nn.hpp"

namespace spasvc {

/// DDSP acoustic model and diffusion denoiser sharing one parameter store,
/// plus the corpus facts inference needs (speaker table, mel normalisation).
class SvcModel {
 public:
  static constexpr int kCheckpointSchema = 1;

  SvcModel(const SvcConfig& cfg, std::uint64_t init_seed);

  const SvcConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const DdspModel& ddsp() const { return *ddsp_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const MelAnalyzer& analyzer() const { return analyzer_; }

  std::vector<std::string> speakers;  // index i holds speaker id i+1
  MelNorm norm;

  /// 1-based id of `name`, or of the numeric string `name`. Throws DataError if unknown.
  int speaker_id(const std::string& name) const;

  /// Parameters and corpus metadata as an archive; callers add optimizer state.
  TensorArchive to_archive(std::int64_t step) const;
  static SvcModel from_archive(const TensorArchive& ar);
  /// Copies every parameter from `ar`; shapes must match.
  void load_parameters(const TensorArchive& ar);

  void save(const std::filesystem::path& path, std::int64_t step = 0) const;
  static SvcModel load(const std::filesystem::path& path);

 private:
  SvcConfig cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<DdspModel> ddsp_;
  std::unique_ptr<Denoiser> denoiser_;
  DiffusionSchedule schedule_;
  MelAnalyzer analyzer_;
};

}  // namespace spasvc
