#include "numlm/cli.hpp"

int main(int argc, char** argv) { return numlm::cli::run(argc, argv); }
