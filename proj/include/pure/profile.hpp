#pragma once

#include <string>
#include <vector>

namespace pure {

// One extractor response: what a single review says about the user.
struct Extracted {
  std::vector<std::string> likes;
  std::vector<std::string> dislikes;
  std::vector<std::string> features;

  bool operator==(const Extracted&) const = default;
};

// Previous profile concatenated with a fresh extraction, before compaction.
struct RawProfile {
  std::vector<std::string> likes;
  std::vector<std::string> dislikes;
  std::vector<std::string> features;

  bool operator==(const RawProfile&) const = default;
};

// User profile at timestep `version` (0 = empty, before any review).
struct Profile {
  std::vector<std::string> likes;
  std::vector<std::string> dislikes;
  std::vector<std::string> features;
  int version = 0;

  bool operator==(const Profile&) const = default;
};

}  // namespace pure
