#pragma once

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/experiment.hpp"
#include "macrok/fw.hpp"
#include "macrok/io.hpp"
#include "macrok/linear.hpp"
#include "macrok/metrics.hpp"
#include "macrok/oracle.hpp"
#include "macrok/rng.hpp"
#include "macrok/synthetic.hpp"
