#pragma once

namespace wpb {

/// Entry point for the `wpb` tool. Returns 0 on success, 1 for usage or
/// configuration errors and 2 for failures while running.
int cli_main(int argc, char** argv);

}  // namespace wpb
