#include "miga/bench.hpp"

int main(int argc, char** argv) { return miga::run_main(argc, argv); }
