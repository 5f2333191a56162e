#include "cli.hpp"

int main(int argc, char** argv) { return ikdr::cli::run(argc, argv); }
