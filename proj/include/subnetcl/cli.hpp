#pragma once

// Command-line front end: train, eval, masks, infer-id, ablation.
//
// Exit codes: 0 success, 1 invariant violation or runtime failure,
// 2 usage or configuration error. SUBNETCL_LOG=quiet|info|debug sets
// log verbosity on stderr.

#include <iosfwd>

namespace subnetcl::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subnetcl::cli
