#include "uacer/cli.hpp"

int main(int argc, char** argv) { return uacer::cli_main(argc, argv); }
