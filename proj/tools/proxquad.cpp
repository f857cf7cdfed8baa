#include "proxquad/cli.hpp"

int main(int argc, char** argv) { return proxquad::cli::run(argc, argv); }
