#include "malakit/cli.hpp"

int main(int argc, char** argv) { return malakit::cli_entry(argc, argv); }
