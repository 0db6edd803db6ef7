#include "defect_foundry/cli/app.hpp"

int main(int argc, char** argv) { return defect_foundry::cli::run(argc, argv); }
