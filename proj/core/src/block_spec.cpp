#include "hyb/block_spec.hpp"

#include <algorithm>

namespace hyb {

namespace {

bool contains(const std::vector<LayerKind>& v, LayerKind k) {
  return std::find(v.begin(), v.end(), k) != v.end();
}

std::string letters(const std::vector<LayerKind>& v) {
  std::string s;
  for (LayerKind k : v) s += static_cast<char>(k);
  return s;
}

}  // namespace

bool BlockSpec::has_kind(LayerKind k) const {
  if (!parallel) return contains(seq, k);
  return contains(branch_m, k) || contains(branch_s, k);
}

std::vector<LayerKind> BlockSpec::sublayers() const {
  if (!parallel) return seq;
  std::vector<LayerKind> all = branch_m;
  all.insert(all.end(), branch_s.begin(), branch_s.end());
  return all;
}

std::string SpecParseError::render(const std::string& source) const {
  std::string out = source + "\n";
  out.append(std::min(pos, source.size()), ' ');
  out += "^ ";
  out += what();
  return out;
}

BlockSpec parse_block_spec(const std::string& text) {
  // Trim surrounding whitespace; positions refer to the original string.
  size_t lo = 0, hi = text.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(text[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(text[hi - 1]))) --hi;
  if (lo == hi) throw SpecParseError("empty block spec", 0);

  std::vector<LayerKind> first, second;
  std::vector<LayerKind>* cur = &first;
  bool saw_bar = false;
  Aggregation agg = Aggregation::Avg;
  size_t bar_pos = 0;

  size_t i = lo;
  for (; i < hi; ++i) {
    const char c = text[i];
    if (c == 'M' || c == 'S' || c == 'F') {
      cur->push_back(static_cast<LayerKind>(c));
    } else if (c == '|') {
      if (saw_bar) throw SpecParseError("more than one branch separator", i);
      if (cur->empty()) throw SpecParseError("empty branch before '|'", i);
      saw_bar = true;
      bar_pos = i;
      cur = &second;
    } else if (c == '+') {
      if (!saw_bar) throw SpecParseError("aggregation requires a parallel spec", i);
      if (cur->empty()) throw SpecParseError("empty branch before '+'", i);
      const std::string name = text.substr(i + 1, hi - i - 1);
      if (name == "Avg")
        agg = Aggregation::Avg;
      else if (name == "Proj")
        agg = Aggregation::Proj;
      else if (name == "MergeAttn")
        agg = Aggregation::MergeAttn;
      else
        throw SpecParseError("unknown aggregation '" + name + "' (expected Avg, Proj or MergeAttn)",
                             i + 1);
      i = hi;
      break;
    } else {
      throw SpecParseError(std::string("unknown layer symbol '") + c + "' (expected M, S or F)", i);
    }
  }

  BlockSpec spec;
  spec.source = text.substr(lo, hi - lo);
  spec.agg = agg;

  if (!saw_bar) {
    spec.parallel = false;
    spec.seq = first;
    return spec;
  }
  if (second.empty()) throw SpecParseError("empty branch after '|'", bar_pos + 1);

  spec.parallel = true;
  const bool first_m = contains(first, LayerKind::Mamba);
  const bool first_s = contains(first, LayerKind::Swa);
  const bool second_m = contains(second, LayerKind::Mamba);
  const bool second_s = contains(second, LayerKind::Swa);
  if (first_m && first_s)
    throw SpecParseError("branch '" + letters(first) + "' mixes M and S", lo);
  if (second_m && second_s)
    throw SpecParseError("branch '" + letters(second) + "' mixes M and S", bar_pos + 1);
  if (first_m && second_m) throw SpecParseError("both branches bear M, one must bear S", lo);
  if (first_s && second_s) throw SpecParseError("both branches bear S, one must bear M", lo);
  if (first_m && second_s) {
    spec.branch_m = first;
    spec.branch_s = second;
  } else if (first_s && second_m) {
    spec.branch_m = second;
    spec.branch_s = first;
  } else {
    throw SpecParseError("parallel spec needs one M-bearing and one S-bearing branch", lo);
  }
  return spec;
}

std::string render_block_spec(const BlockSpec& spec) {
  if (!spec.parallel) return letters(spec.seq);
  std::string out = letters(spec.branch_m) + "|" + letters(spec.branch_s);
  if (spec.agg != Aggregation::Avg) {
    out += "+";
    out += aggregation_name(spec.agg);
  }
  return out;
}

const char* aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::Avg: return "Avg";
    case Aggregation::Proj: return "Proj";
    case Aggregation::MergeAttn: return "MergeAttn";
  }
  return "?";
}

}  // namespace hyb
