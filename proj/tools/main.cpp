#include "searchbound/cli.hpp"

int main(int argc, char** argv) { return searchbound::run_cli(argc, argv); }
