#include "vaf/focus.hpp"

#include <algorithm>
#include <cmath>

#include "vaf/error.hpp"

namespace vaf {
namespace {

bool scores_tie(double a, double b) {
  return std::abs(a - b) <= kFocusTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

FocusScore brenner(const Image& image) {
  if (image.width() < 3) throw DomainError("brenner requires width >= 3");
  double sum = 0.0;
  for (int y = 0; y < image.height(); ++y) {
    const double* row = image.data() + static_cast<std::size_t>(y) * image.width();
    for (int x = 0; x + 2 < image.width(); ++x) {
      const double d = row[x + 2] - row[x];
      sum += d * d;
    }
  }
  return FocusScore{sum};
}

SharperPair select_sharper(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("select_sharper: image shapes differ");
  const double sa = brenner(a).value;
  const double sb = brenner(b).value;
  if (scores_tie(sa, sb) || sa > sb) return SharperPair{a, b, true};
  return SharperPair{b, a, false};
}

double find_focus(const ZStack& stack) {
  if (stack.empty()) throw DomainError("find_focus: empty z-stack");
  std::vector<double> scores;
  scores.reserve(stack.size());
  for (const auto& entry : stack) scores.push_back(brenner(entry.image).value);
  const double best = *std::max_element(scores.begin(), scores.end());

  bool found = false;
  double chosen = 0.0;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (!(scores_tie(scores[i], best) || scores[i] == best)) continue;
    const double off = stack[i].offset_um;
    if (!found || std::abs(off) < std::abs(chosen) ||
        (std::abs(off) == std::abs(chosen) && off < chosen)) {
      chosen = off;
      found = true;
    }
  }
  return chosen;
}

}  // namespace vaf
