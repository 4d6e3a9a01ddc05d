#pragma once

#include <iosfwd>
#include <string>

#include "cobra/model.hpp"
#include "cobra/rng.hpp"

namespace cobra {

// Versioned model container, magic "COBRACKP". Holds the resolved config
// text, every named parameter tensor, the registry freeze mask, the
// subject -> step routing manifest, and the trainer RNG state. Byte-stable
// for a fixed model state.
void save_checkpoint(CobraModel& model, const ExperimentConfig& cfg, const Rng& rng,
                     std::ostream& os);
void save_checkpoint(CobraModel& model, const ExperimentConfig& cfg, const Rng& rng,
                     const std::string& path);

struct LoadedCheckpoint {
    CobraModel model;
    ExperimentConfig cfg;
    Rng rng;
};

LoadedCheckpoint load_checkpoint(std::istream& is);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cobra
