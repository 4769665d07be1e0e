#pragma once

// Versioned text model files. Doubles are written in shortest round-trip
// form, so load(save(x)) reproduces every bit.

#include <filesystem>
#include <string>
#include <string_view>

#include "sdm/core.hpp"
#include "sdm/online.hpp"

namespace sdm {

struct StoredSequence {
  DescentSequence sequence;
  /// Free-form tag naming what the model was trained for, e.g. "pose:cube".
  std::string problem;
};

std::string format_sequence(const DescentSequence& seq, std::string_view problem = "");
StoredSequence parse_sequence(std::string_view text);
void save_sequence(const std::filesystem::path& path, const DescentSequence& seq,
                   std::string_view problem = "");
StoredSequence load_sequence(const std::filesystem::path& path);

std::string format_online(const OnlineState& state);
OnlineState parse_online(std::string_view text);
void save_online(const std::filesystem::path& path, const OnlineState& state);
OnlineState load_online(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace sdm
