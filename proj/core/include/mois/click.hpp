#pragma once

#include <string>

namespace mois {

// A user interaction on voxel (x, y) of a slice. positive = foreground.
struct Click {
  int x = 0;
  int y = 0;
  int slice = 0;
  bool positive = true;

  bool operator==(const Click&) const = default;
  std::string str() const {
    return std::string(positive ? "+" : "-") + "(" + std::to_string(x) + "," + std::to_string(y) + "," +
           std::to_string(slice) + ")";
  }
};

}  // namespace mois
