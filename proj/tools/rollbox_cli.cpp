#include "rollbox/cli/app.hpp"

int main(int argc, char** argv) { return rollbox::cli::run(argc, argv); }
