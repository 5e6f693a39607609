#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "biasbench/pipeline.hpp"

namespace biasbench::testing {

// Small but complete world for tests that need real artifacts.
inline PipelineConfig tiny_config(std::uint64_t world_seed = 11) {
  PipelineConfig c;
  c.world.rng_seed = world_seed;
  c.sample.training_count = 1500;
  c.sample.candidate_seeds = 12;
  c.curate.screen_keep = 8;
  c.curate.final_seeds = 4;
  c.pairs.n_other = 2;
  c.analyze.analyzer.bootstrap_resamples = 50;
  c.analyze.analyzer.t_hcic_set = {};
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("biasbench-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline FaceRecord toy_face(SeedId seed, const DemographicGroup& g, Variant v = Variant::prototype(),
                           int dim = 4) {
  FaceRecord f;
  f.seed_id = seed;
  f.group = g;
  f.variant = v;
  f.face_id = make_face_id(seed, g, v);
  f.latent.values.assign(static_cast<std::size_t>(dim), 0.0);
  f.latent.values[0] = static_cast<double>(seed);
  f.latent.space_id = "toy";
  if (v.attribute == Attribute::Pose) f.pose_deg = kPoseAnglesDeg[static_cast<std::size_t>(v.index)];
  if (v.attribute == Attribute::Lighting) {
    f.light = kLightingSequence[static_cast<std::size_t>(v.index)];
    f.light_intensity = kLightIntensity;
  }
  return f;
}

inline PairRecord pair_of(std::string id, std::string left, std::string right) {
  PairRecord p;
  p.pair_id = std::move(id);
  p.left = std::move(left);
  p.right = std::move(right);
  return p;
}

// Every face of `seeds` x all groups: prototype plus 16 non-neutral slots.
inline std::vector<FaceRecord> toy_faces(int seeds) {
  std::vector<FaceRecord> out;
  for (int s = 0; s < seeds; ++s) {
    for (const DemographicGroup& g : all_groups()) {
      out.push_back(toy_face(static_cast<SeedId>(s), g));
      for (Attribute a : kNonProtected)
        for (int i = 0; i < kSequenceLength; ++i)
          if (i != neutral_index(a)) out.push_back(toy_face(static_cast<SeedId>(s), g, Variant::slot(a, i)));
    }
  }
  return out;
}

}  // namespace biasbench::testing
