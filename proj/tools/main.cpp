#include "malcom/cli.hpp"

int main(int argc, char** argv) { return malcom::cli_dispatch(argc, argv); }
