#include "sgil/bench_io.hpp"

int main(int argc, char** argv) { return sgil::io::cli_main(argc, argv); }
