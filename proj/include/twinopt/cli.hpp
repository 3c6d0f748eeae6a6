#pragma once

// ------------------------------------------------------------
// batch front end binding every module: simulate | tune | train
// | report | explain | pipeline | stepwise. Exit codes: 0 on
// success, 1 on runtime failure, 2 on usage or config errors.
// Seed precedence: --seed flag > TWIN_SEED env > config file.
// ------------------------------------------------------------

namespace twinopt {

int run_cli(int argc, char** argv);

}  // namespace twinopt
