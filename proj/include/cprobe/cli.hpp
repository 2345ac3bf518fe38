#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cprobe/backend.hpp"
#include "cprobe/pipeline.hpp"
#include "cprobe/storage.hpp"

namespace cprobe {

/// Captures every module at every layer for the role positions of each CK or
/// PK example. ND examples are skipped.
ActivationStore capture_examples(const Backend& backend,
                                 const std::vector<LabeledExample>& examples);

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// status; the summary line goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cprobe
