#include "mixerbench/cli.hpp"

int main(int argc, char** argv) { return mixerbench::run_cli({argv, argv + argc}); }
