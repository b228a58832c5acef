#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xfc/error.hpp"
#include "xfc/field.hpp"

namespace xfc {

enum class FieldRole { plain, anchor, target };

inline std::string to_string(FieldRole r) {
  switch (r) {
  case FieldRole::plain: return "plain";
  case FieldRole::anchor: return "anchor";
  case FieldRole::target: return "target";
  }
  return "?";
}

struct FieldEntry {
  std::string name;
  std::filesystem::path file;
  Dims dims;
  Dtype dtype = Dtype::f32;
  FieldRole role = FieldRole::plain;
  std::vector<std::string> anchors;
  std::filesystem::path cfnn;
};

struct Manifest {
  std::vector<FieldEntry> fields;
};

// Processing order: every anchor precedes the targets that read it.
struct CompressionPlan {
  std::vector<FieldEntry> order;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i].name == name) return i;
    throw ManifestError("field '" + name + "' is not in the plan");
  }
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

} // namespace detail

// Stanza format, one key per line:
//   field <name> / file <path> / dims <d0> <d1> [<d2>] / dtype f32|f64 /
//   role plain|anchor|target / anchors <name>... / cfnn <path>
// Stanzas are separated by blank lines; '#' starts a comment. Relative paths
// resolve against base_dir.
inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  Manifest m;
  std::optional<FieldEntry> cur;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!cur) return;
    if (cur->file.empty()) throw ManifestError("field '" + cur->name + "': missing 'file'");
    if (cur->dims.empty()) throw ManifestError("field '" + cur->name + "': missing 'dims'");
    m.fields.push_back(std::move(*cur));
    cur.reset();
  };
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto tok = detail::split_ws(line);
    if (tok.empty()) {
      flush();
      continue;
    }
    const auto where = "manifest line " + std::to_string(line_no) + ": ";
    const std::string& key = tok[0];
    if (key == "field") {
      flush();
      if (tok.size() != 2) throw ManifestError(where + "'field' takes exactly one name");
      cur = FieldEntry{};
      cur->name = tok[1];
      continue;
    }
    if (!cur) throw ManifestError(where + "'" + key + "' outside a field stanza");
    const auto ctx = where + "field '" + cur->name + "': ";
    if (key == "file") {
      if (tok.size() != 2) throw ManifestError(ctx + "'file' takes one path");
      cur->file = resolve(tok[1]);
    } else if (key == "dims") {
      if (tok.size() != 3 && tok.size() != 4)
        throw ManifestError(ctx + "'dims' takes 2 or 3 extents");
      cur->dims.clear();
      for (std::size_t i = 1; i < tok.size(); ++i) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
          v = std::stoull(tok[i], &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok[i].size() || v == 0)
          throw ManifestError(ctx + "invalid extent '" + tok[i] + "'");
        cur->dims.push_back(static_cast<std::size_t>(v));
      }
    } else if (key == "dtype") {
      if (tok.size() != 2) throw ManifestError(ctx + "'dtype' takes one value");
      try {
        cur->dtype = parse_dtype(tok[1]);
      } catch (const ArgumentError& e) {
        throw ManifestError(ctx + e.what());
      }
    } else if (key == "role") {
      if (tok.size() != 2) throw ManifestError(ctx + "'role' takes one value");
      if (tok[1] == "plain") cur->role = FieldRole::plain;
      else if (tok[1] == "anchor") cur->role = FieldRole::anchor;
      else if (tok[1] == "target") cur->role = FieldRole::target;
      else throw ManifestError(ctx + "unknown role '" + tok[1] + "'");
    } else if (key == "anchors") {
      if (tok.size() < 2) throw ManifestError(ctx + "'anchors' needs at least one name");
      cur->anchors.assign(tok.begin() + 1, tok.end());
    } else if (key == "cfnn") {
      if (tok.size() != 2) throw ManifestError(ctx + "'cfnn' takes one path");
      cur->cfnn = resolve(tok[1]);
    } else {
      throw ManifestError(ctx + "unknown key '" + key + "'");
    }
  }
  flush();
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

inline CompressionPlan validate_manifest(const Manifest& manifest) {
  std::map<std::string, const FieldEntry*> by_name;
  for (const auto& f : manifest.fields) {
    if (f.name.empty()) throw ManifestError("field with empty name");
    if (f.dims.size() != 2 && f.dims.size() != 3)
      throw ManifestError("field '" + f.name + "': dims must have 2 or 3 extents");
    if (!by_name.emplace(f.name, &f).second)
      throw ManifestError("field '" + f.name + "' is declared twice");
  }
  for (const auto& f : manifest.fields) {
    if (f.role != FieldRole::target) {
      if (!f.anchors.empty())
        throw ManifestError("field '" + f.name + "': only targets may list anchors");
      if (!f.cfnn.empty())
        throw ManifestError("field '" + f.name + "': only targets may name a cfnn model");
      continue;
    }
    if (f.anchors.empty()) throw ManifestError("target '" + f.name + "' has no anchors");
    if (f.cfnn.empty()) throw ManifestError("target '" + f.name + "' has no cfnn weight file");
    for (std::size_t i = 0; i < f.anchors.size(); ++i) {
      const auto& a = f.anchors[i];
      for (std::size_t j = 0; j < i; ++j)
        if (f.anchors[j] == a)
          throw ManifestError("target '" + f.name + "' lists anchor '" + a + "' twice");
      if (a == f.name) throw ManifestError("target '" + f.name + "' anchors on itself (cycle)");
      auto it = by_name.find(a);
      if (it == by_name.end())
        throw ManifestError("target '" + f.name + "': missing anchor '" + a + "'");
      if (it->second->role == FieldRole::target)
        throw ManifestError("target '" + f.name + "': anchor '" + a +
                            "' is itself a target (cyclic or chained dependency)");
      if (it->second->dims != f.dims)
        throw ManifestError("target '" + f.name + "': anchor '" + a + "' has different dims");
    }
  }
  CompressionPlan plan;
  for (const auto& f : manifest.fields)
    if (f.role != FieldRole::target) plan.order.push_back(f);
  for (const auto& f : manifest.fields)
    if (f.role == FieldRole::target) plan.order.push_back(f);
  return plan;
}

} // namespace xfc
