#pragma once

#include "boxprob/box.hpp"
#include "boxprob/error.hpp"
#include "boxprob/io.hpp"
#include "boxprob/mc_oracle.hpp"
#include "boxprob/model.hpp"
#include "boxprob/mvn.hpp"
#include "boxprob/norta.hpp"
#include "boxprob/report.hpp"
#include "boxprob/robustness.hpp"
