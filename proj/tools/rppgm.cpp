#include "rppgm/cli/commands.hpp"

int main(int argc, char** argv) { return rppgm::cli::run(argc, argv); }
