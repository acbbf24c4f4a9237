#pragma once

// CLI entry point, split from main() so tests can drive it in-process.
int hyb_cli_main(int argc, const char* const* argv);
