#include "mmflow/run_config.hpp"

int main(int argc, char** argv) { return mmflow::cli_main(argc, argv); }
