#include "pathohr/tokens.hpp"

#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

TokenSet TokenSet::from_features(Matrix features) {
  TokenSet t;
  t.sizes.assign(features.rows(), 1);
  t.features = std::move(features);
  return t;
}

void TokenSet::validate() const {
  if (sizes.size() != count()) {
    throw DimensionError("TokenSet: " + std::to_string(sizes.size()) + " sizes for " + std::to_string(count()) +
                         " tokens");
  }
  if (!positions.empty() && positions.size() != count()) {
    throw DimensionError("TokenSet: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(count()) + " tokens");
  }
}

}  // namespace pathohr
