#include "icrlvr/cli.hpp"

int main(int argc, char** argv) { return icr::cli::dispatch(argc, argv); }
