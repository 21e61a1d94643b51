#include "posrep/commands.hpp"

int main(int argc, char** argv) { return posrep::run_cli(argc, argv); }
