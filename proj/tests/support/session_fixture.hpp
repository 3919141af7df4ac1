#pragma once

#include <filesystem>

namespace replica::test {

// A small review session under `dir`:
//   queries q0 (1 kHz sine), q1, q2 (silent); references r0..r3
//   retrieval "mel":  (q0,r0) (q1,r1) (q2,r2)
//   retrieval "clap": (q1,r1) (q2,r3)
//   dedup clusters:   {r0,r1} as component 0, {r2,r3} as component 1
void write_session(const std::filesystem::path& dir);

}  // namespace replica::test
