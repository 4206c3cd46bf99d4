#pragma once

#include <ostream>
#include <string>

#include "dereverb/config.hpp"

namespace dereverb::cli {

/// Fills output paths left empty with names derived from `output`
/// (out.psi.json, out.trace.ndjson, out.manifest.json).
void resolve_paths(config::RunConfig& cfg);

/// Runs the pipeline selected by cfg.mode and writes every requested output,
/// including the manifest. Text results (analyze-rir CSV, sweep report) go
/// to `out` when no file is named for them.
void run(const config::RunConfig& cfg, std::ostream& out);

}  // namespace dereverb::cli
