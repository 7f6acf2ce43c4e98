// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "kevolve/core/types.hpp"

namespace kevolve {

// Byte offsets of the mutable region. The block spans [block_begin,
// block_end); everything before and after is locked.
struct BlockLocation {
  std::size_t block_begin = 0;
  std::size_t block_end = 0;
};

// Marker lines match after trailing whitespace is trimmed. Throws no_block
// (a marker is missing), ambiguous_block (more than one start or end) or
// inverted_markers (end precedes start).
BlockLocation locate_block(std::string_view program, const BlockMarkers& markers);

// Returns the content of one surrounding ``` fence (language tag allowed),
// or the input unchanged when it has no fence.
std::string_view strip_code_fence(std::string_view generation);

struct ExtractedBlock {
  std::string full_program;  // fenced content, markers retained
  std::string block;         // text strictly between the marker lines
};

ExtractedBlock extract_evolve_block(std::string_view generation, const BlockMarkers& markers);

// Replaces the parent's block. A non-empty block without a trailing newline
// gets one so the end marker stays on its own line. Throws
// parent_block_malformed, or locked_region_violation when the block carries
// a marker line or the locked bytes changed.
std::string merge_block(std::string_view parent_full_source, std::string_view new_block,
                        const BlockMarkers& markers);

// True when both programs are well-formed and agree byte-for-byte outside
// their blocks.
bool locked_regions_equal(std::string_view a, std::string_view b, const BlockMarkers& markers);

// Seed program: the whole source becomes the initial block.
std::string wrap_in_block(std::string_view source, const BlockMarkers& markers);

}  // namespace kevolve
