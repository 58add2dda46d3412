#pragma once

// Command-line entry point: gen-data | train | generate | eval | compare | bench.
// Values from --config <file> (key=value lines) apply first; flags override them.

namespace numlm::cli {

int run(int argc, char** argv);

}  // namespace numlm::cli
