#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "vaf/image.hpp"

namespace vaf {

struct FocusScore {
  double value = 0.0;
  static constexpr std::string_view metric_name = "brenner";
};

/// Brenner gradient: sum over rows of (I(x+2, y) - I(x, y))^2. Horizontal
/// differences only, no threshold. Requires width >= 3.
FocusScore brenner(const Image& image);

/// Scores closer than this (relative to the larger score, floored at 1) are a tie.
inline constexpr double kFocusTieTolerance = 1e-12;

struct SharperPair {
  Image y1;
  Image y2;
  bool first_is_y1 = true;
};

/// Orders two captures so y1 carries the larger Brenner score. The first
/// argument wins ties.
SharperPair select_sharper(const Image& a, const Image& b);

struct StackEntry {
  double offset_um = 0.0;
  Image image;
};
using ZStack = std::vector<StackEntry>;

/// Offset of the Brenner-maximal image; ties resolve to the smallest
/// |offset|, then to the negative side.
double find_focus(const ZStack& stack);

}  // namespace vaf
