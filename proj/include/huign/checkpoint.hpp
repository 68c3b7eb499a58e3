#pragma once

#include <filesystem>

#include "huign/intents.hpp"

namespace huign {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

// Directory layout: manifest.txt plus one raw-f32 file per parameter block.
// Values are stored as 32-bit floats.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const ModelConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Per modality and level: assignments_<m>_level<l>.csv with
// `item_id,argmax_intent,max_weight` rows taken from the chain matrix, and
// gamma_<m>_level<l>.f32 holding Gamma^(l).
void export_assignments(const std::filesystem::path& dir, const Representations& reps);
// users.f32 (ū), items.f32 (v̄) and item_repr_<m>.f32 (V_m).
void export_embeddings(const std::filesystem::path& dir, const Representations& reps);

}  // namespace huign
