#include "charforge/cli.hpp"

int main(int argc, char** argv) { return charforge::cli::dispatch(argc, argv); }
