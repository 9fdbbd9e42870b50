#include "propwatch/cli.hpp"

int main(int argc, char** argv) { return propwatch::dispatch(argc, argv); }
