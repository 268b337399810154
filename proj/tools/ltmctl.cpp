#include "ltm/cli/app.hpp"

int main(int argc, char** argv) { return ltm::cli::run(argc, argv); }
