#include "sigadv/cli.hpp"

int main(int argc, char** argv) { return sigadv::cli_main(argc, argv); }
