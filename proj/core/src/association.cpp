#include "msglmb/association.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace msglmb {

namespace {

bool label_less(const ExtendedAssociationMap::Entry& a, const ExtendedAssociationMap::Entry& b) {
  return a.first < b.first;
}

}  // namespace

ExtendedAssociationMap::ExtendedAssociationMap(std::vector<Entry> entries)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), label_less);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].second < -1) {
      throw InvalidInputError("association value below -1 for label " +
                              to_string(entries_[i].first));
    }
    if (i > 0 && entries_[i - 1].first == entries_[i].first) {
      throw InvalidInputError("duplicate label " + to_string(entries_[i].first));
    }
  }
}

std::optional<int> ExtendedAssociationMap::find(const Label& l) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), Entry{l, 0}, label_less);
  if (it == entries_.end() || it->first != l) {
    return std::nullopt;
  }
  return it->second;
}

int ExtendedAssociationMap::at(const Label& l) const {
  auto v = find(l);
  if (!v) {
    throw InvalidInputError("label " + to_string(l) + " not in association map");
  }
  return *v;
}

void ExtendedAssociationMap::set(const Label& l, int value) {
  if (value < -1) {
    throw InvalidInputError("association value below -1");
  }
  auto it = std::lower_bound(entries_.begin(), entries_.end(), Entry{l, 0}, label_less);
  if (it != entries_.end() && it->first == l) {
    it->second = value;
  } else {
    entries_.insert(it, Entry{l, value});
  }
}

void ExtendedAssociationMap::erase(const Label& l) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), Entry{l, 0}, label_less);
  if (it != entries_.end() && it->first == l) {
    entries_.erase(it);
  }
}

LabelSet ExtendedAssociationMap::domain() const {
  LabelSet out;
  out.reserve(entries_.size());
  for (const auto& [l, v] : entries_) {
    out.push_back(l);
  }
  return out;
}

LabelSet ExtendedAssociationMap::live_labels() const {
  LabelSet out;
  for (const auto& [l, v] : entries_) {
    if (v >= 0) {
      out.push_back(l);
    }
  }
  return out;
}

bool ExtendedAssociationMap::positive_one_to_one() const {
  std::vector<int> used;
  for (const auto& [l, v] : entries_) {
    if (v > 0) {
      used.push_back(v);
    }
  }
  std::sort(used.begin(), used.end());
  return std::adjacent_find(used.begin(), used.end()) == used.end();
}

int ExtendedAssociationMap::max_index() const {
  int m = -1;
  for (const auto& [l, v] : entries_) {
    m = std::max(m, v);
  }
  return m;
}

std::size_t ExtendedAssociationMap::hash() const {
  std::size_t h = 1469598103934665603ULL;
  auto mix = [&h](std::size_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  for (const auto& [l, v] : entries_) {
    mix(static_cast<std::size_t>(l.birth_time));
    mix(static_cast<std::size_t>(l.birth_index));
    mix(static_cast<std::size_t>(v + 2));
  }
  return h;
}

std::string ExtendedAssociationMap::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i > 0) {
      out += ',';
    }
    out += to_string(entries_[i].first);
    out += '=';
    out += std::to_string(entries_[i].second);
  }
  return out;
}

ExtendedAssociationMap ExtendedAssociationMap::from_text(const std::string& text) {
  std::vector<Entry> entries;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) {
      continue;
    }
    const auto dot = item.find('.');
    const auto eq = item.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
      throw InvalidInputError("malformed association entry '" + item + "'");
    }
    try {
      Label l{std::stoi(item.substr(0, dot)), std::stoi(item.substr(dot + 1, eq - dot - 1))};
      entries.emplace_back(l, std::stoi(item.substr(eq + 1)));
    } catch (const std::logic_error&) {
      throw InvalidInputError("malformed association entry '" + item + "'");
    }
  }
  return ExtendedAssociationMap(std::move(entries));
}

AssociationMap::AssociationMap(std::vector<ExtendedAssociationMap::Entry> entries)
    : map_(std::move(entries)) {
  for (const auto& [l, v] : map_.entries()) {
    if (v < 0) {
      throw InvalidInputError("association map values must be non-negative");
    }
  }
  if (!map_.positive_one_to_one()) {
    throw InvalidInputError("association map is not positive 1-1");
  }
}

ExtendedAssociationMap AssociationMap::extend(const LabelSet& domain) const {
  ExtendedAssociationMap out = map_;
  for (const Label& l : domain) {
    if (!out.find(l)) {
      out.set(l, -1);
    }
  }
  return out;
}

AssociationMap AssociationMap::from_extended(const ExtendedAssociationMap& gamma) {
  std::vector<ExtendedAssociationMap::Entry> live;
  for (const auto& e : gamma.entries()) {
    if (e.second >= 0) {
      live.push_back(e);
    }
  }
  return AssociationMap(std::move(live));
}

}  // namespace msglmb
