#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gdedup/corpus.hpp"

namespace gdedup {

/// L2-normalized sparse weight vector over token ids, sorted by id.
struct SparseVector {
  std::string doc_id;
  std::vector<std::pair<TokenId, double>> weights;

  double norm() const;
  void normalize();  // no-op on an all-zero vector
};

double cosine(const SparseVector& a, const SparseVector& b);

}  // namespace gdedup
