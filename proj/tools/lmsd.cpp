#include "lmsd/lmsd.hpp"

int main(int argc, char** argv) { return lmsd::cli::run(argc, argv); }
