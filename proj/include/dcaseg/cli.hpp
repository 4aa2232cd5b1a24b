#pragma once

namespace dcaseg {

// Command-line entry point; returns a process exit code.
int cli_main(int argc, char** argv);

}  // namespace dcaseg
