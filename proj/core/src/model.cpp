#include "spasvc/model.hpp"

#include <charconv>

#include "spasvc/error.hpp"

namespace spasvc {

SvcModel::SvcModel(const SvcConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), schedule_(cfg.schedule()), analyzer_(cfg.mel) {
  cfg_.finalize();
  cfg_.validate();
  std::mt19937_64 rng(init_seed);
  ddsp_ = std::make_unique<DdspModel>(cfg_.ddsp, store_, rng);
  denoiser_ = std::make_unique<Denoiser>(cfg_.denoiser, store_, rng);
}

int SvcModel::speaker_id(const std::string& name) const {
  for (std::size_t i = 0; i < speakers.size(); ++i)
    if (speakers[i] == name) return static_cast<int>(i) + 1;
  int id = 0;
  const auto res = std::from_chars(name.data(), name.data() + name.size(), id);
  if (res.ec == std::errc() && res.ptr == name.data() + name.size() && id >= 1 &&
      id <= static_cast<int>(speakers.size()))
    return id;
  throw DataError("unknown speaker '" + name + "'");
}

TensorArchive SvcModel::to_archive(std::int64_t step) const {
  TensorArchive ar;
  ar.meta["kind"] = "spasvc-checkpoint";
  ar.meta["schema"] = kCheckpointSchema;
  ar.meta["config"] = to_json(cfg_);
  ar.meta["step"] = step;
  ar.meta["speakers"] = speakers;
  ar.meta["norm"] = {{"min", norm.min}, {"max", norm.max}};
  for (const auto& [name, var] : store_.entries()) ar.tensors["param/" + name] = var.value();
  return ar;
}

SvcModel SvcModel::from_archive(const TensorArchive& ar) {
  if (ar.meta.value("kind", "") != "spasvc-checkpoint") throw DataError("archive is not a checkpoint");
  if (ar.meta.value("schema", 0) != kCheckpointSchema)
    throw DataError("unsupported checkpoint schema " + ar.meta.value("schema", nlohmann::json()).dump());
  SvcModel model(config_from_json(ar.meta.at("config")), 0);
  model.speakers = ar.meta.at("speakers").get<std::vector<std::string>>();
  model.norm = MelNorm{ar.meta.at("norm").at("min").get<double>(), ar.meta.at("norm").at("max").get<double>()};
  model.load_parameters(ar);
  return model;
}

void SvcModel::load_parameters(const TensorArchive& ar) {
  for (const auto& [name, var] : store_.entries()) {
    const auto it = ar.tensors.find("param/" + name);
    if (it == ar.tensors.end()) throw DataError("checkpoint is missing parameter " + name);
    if (it->second.rows() != var.rows() || it->second.cols() != var.cols())
      throw DataError("checkpoint parameter " + name + " has the wrong shape");
    ag::Var v = var;
    v.mutable_value() = it->second;
  }
}

void SvcModel::save(const std::filesystem::path& path, std::int64_t step) const { to_archive(step).save(path); }

SvcModel SvcModel::load(const std::filesystem::path& path) { return from_archive(TensorArchive::load(path)); }

}  // namespace spasvc
