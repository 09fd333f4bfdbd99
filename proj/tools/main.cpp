#include "tiarec/cli.hpp"

int main(int argc, char** argv) { return tiarec::run_cli(argc, argv); }
