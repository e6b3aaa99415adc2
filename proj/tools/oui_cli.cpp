#include "oui/cli.hpp"

int main(int argc, char** argv) { return oui::cli::run(argc, argv); }
