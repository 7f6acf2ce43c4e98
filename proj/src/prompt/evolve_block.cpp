// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/prompt/evolve_block.hpp"

#include <optional>
#include <vector>

#include "kevolve/core/error.hpp"

namespace kevolve {

namespace {

struct Line {
  std::size_t begin = 0;  // first byte
  std::size_t end = 0;    // one past the last byte, excluding '\n'
  std::size_t next = 0;   // start of the following line
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back({pos, text.size(), text.size()});
      break;
    }
    lines.push_back({pos, nl, nl + 1});
    pos = nl + 1;
  }
  return lines;
}

std::string_view rtrim(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\f' || s.back() == '\v'))
    s.remove_suffix(1);
  return s;
}

std::string_view ltrim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool is_marker_line(std::string_view line, std::string_view marker) {
  return rtrim(line) == rtrim(marker);
}

bool is_fence_line(std::string_view line) { return ltrim(line).starts_with("```"); }

}  // namespace

BlockLocation locate_block(std::string_view program, const BlockMarkers& markers) {
  std::optional<Line> start, end;
  int starts = 0, ends = 0;
  for (const Line& line : split_lines(program)) {
    const auto text = program.substr(line.begin, line.end - line.begin);
    if (is_marker_line(text, markers.start_marker)) {
      ++starts;
      start = line;
    } else if (is_marker_line(text, markers.end_marker)) {
      ++ends;
      if (!end) end = line;
    }
  }
  if (starts == 0 || ends == 0)
    throw Error(ErrorCode::no_block, starts == 0 ? "start marker not found" : "end marker not found");
  if (starts > 1 || ends > 1)
    throw Error(ErrorCode::ambiguous_block, std::to_string(starts) + " start and " +
                                                std::to_string(ends) + " end markers found");
  if (end->begin < start->begin)
    throw Error(ErrorCode::inverted_markers, "end marker precedes start marker");
  return BlockLocation{start->next, end->begin};
}

std::string_view strip_code_fence(std::string_view generation) {
  const auto lines = split_lines(generation);
  std::optional<std::size_t> open, close;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto text = generation.substr(lines[i].begin, lines[i].end - lines[i].begin);
    if (!is_fence_line(text)) continue;
    if (!open)
      open = i;
    else
      close = i;
  }
  if (!open || !close) return generation;
  const std::size_t from = lines[*open].next;
  const std::size_t to = lines[*close].begin;
  return generation.substr(from, to - from);
}

ExtractedBlock extract_evolve_block(std::string_view generation, const BlockMarkers& markers) {
  // Markers are located in the raw text, so fence-like lines inside the program never move
  // the block. A fence is dropped only when it encloses both markers.
  const BlockLocation loc = locate_block(generation, markers);
  const auto lines = split_lines(generation);
  std::optional<std::size_t> open, close;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto text = generation.substr(lines[i].begin, lines[i].end - lines[i].begin);
    if (!is_fence_line(text)) continue;
    if (lines[i].next <= loc.block_begin) open = i;
    if (!close && lines[i].begin > loc.block_end) close = i;
  }
  std::string_view program = generation;
  if (open && close) {
    const std::size_t from = lines[*open].next;
    program = generation.substr(from, lines[*close].begin - from);
  }
  return ExtractedBlock{
      std::string(program),
      std::string(generation.substr(loc.block_begin, loc.block_end - loc.block_begin))};
}

std::string merge_block(std::string_view parent_full_source, std::string_view new_block,
                        const BlockMarkers& markers) {
  BlockLocation loc;
  try {
    loc = locate_block(parent_full_source, markers);
  } catch (const Error& e) {
    throw Error(ErrorCode::parent_block_malformed, e.what());
  }
  for (const Line& line : split_lines(new_block)) {
    const auto text = new_block.substr(line.begin, line.end - line.begin);
    if (is_marker_line(text, markers.start_marker) || is_marker_line(text, markers.end_marker))
      throw Error(ErrorCode::locked_region_violation, "new block contains a marker line");
  }

  std::string child;
  child.reserve(parent_full_source.size() + new_block.size() + 1);
  child.append(parent_full_source.substr(0, loc.block_begin));
  child.append(new_block);
  if (!new_block.empty() && new_block.back() != '\n') child.push_back('\n');
  child.append(parent_full_source.substr(loc.block_end));

  if (!locked_regions_equal(parent_full_source, child, markers))
    throw Error(ErrorCode::locked_region_violation, "locked region changed during merge");
  return child;
}

bool locked_regions_equal(std::string_view a, std::string_view b, const BlockMarkers& markers) {
  try {
    const auto la = locate_block(a, markers);
    const auto lb = locate_block(b, markers);
    return a.substr(0, la.block_begin) == b.substr(0, lb.block_begin) &&
           a.substr(la.block_end) == b.substr(lb.block_end);
  } catch (const Error&) {
    return false;
  }
}

std::string wrap_in_block(std::string_view source, const BlockMarkers& markers) {
  std::string out = markers.start_marker + "\n";
  out.append(source);
  if (!source.empty() && source.back() != '\n') out.push_back('\n');
  out += markers.end_marker + "\n";
  return out;
}

}  // namespace kevolve
