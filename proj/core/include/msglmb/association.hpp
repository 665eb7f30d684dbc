#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msglmb/common.hpp"

namespace msglmb {

/// Label to integer assignment kept sorted by label.
///
/// Values follow the extended convention: -1 death (or not born), 0 missed
/// detection, j > 0 detection by measurement j (1-based).
class ExtendedAssociationMap {
 public:
  using Entry = std::pair<Label, int>;

  ExtendedAssociationMap() = default;
  explicit ExtendedAssociationMap(std::vector<Entry> entries);

  [[nodiscard]] std::optional<int> find(const Label& l) const;
  [[nodiscard]] int at(const Label& l) const;
  void set(const Label& l, int value);
  void erase(const Label& l);

  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }

  [[nodiscard]] LabelSet domain() const;
  /// Labels with a non-negative assignment.
  [[nodiscard]] LabelSet live_labels() const;
  /// No two labels share a positive measurement index.
  [[nodiscard]] bool positive_one_to_one() const;
  [[nodiscard]] int max_index() const;

  [[nodiscard]] std::size_t hash() const;
  [[nodiscard]] std::string to_text() const;
  static ExtendedAssociationMap from_text(const std::string& text);

  auto operator<=>(const ExtendedAssociationMap&) const = default;
  bool operator==(const ExtendedAssociationMap&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Positive 1-1 association of live labels to {0..M}.
class AssociationMap {
 public:
  AssociationMap() = default;
  explicit AssociationMap(std::vector<ExtendedAssociationMap::Entry> entries);

  [[nodiscard]] const ExtendedAssociationMap& assignments() const { return map_; }
  [[nodiscard]] std::optional<int> find(const Label& l) const { return map_.find(l); }
  [[nodiscard]] LabelSet domain() const { return map_.domain(); }
  [[nodiscard]] std::size_t size() const { return map_.size(); }

  /// Adds -1 for every label of `domain` not covered by this map.
  [[nodiscard]] ExtendedAssociationMap extend(const LabelSet& domain) const;
  /// Restricts an extended map to its live labels.
  static AssociationMap from_extended(const ExtendedAssociationMap& gamma);

  auto operator<=>(const AssociationMap&) const = default;
  bool operator==(const AssociationMap&) const = default;

 private:
  ExtendedAssociationMap map_;
};

struct AssociationMapHash {
  std::size_t operator()(const ExtendedAssociationMap& m) const noexcept { return m.hash(); }
};

}  // namespace msglmb
