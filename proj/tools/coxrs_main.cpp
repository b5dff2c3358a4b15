#include "coxrs/cli.hpp"

int main(int argc, char** argv) { return coxrs::run_command(argc, argv); }
