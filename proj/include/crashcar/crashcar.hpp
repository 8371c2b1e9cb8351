#pragma once

#include "crashcar/car_model.hpp"
#include "crashcar/error.hpp"
#include "crashcar/graph_centrality.hpp"
#include "crashcar/mcmc_engine.hpp"
#include "crashcar/model_eval.hpp"
#include "crashcar/recovery.hpp"
#include "crashcar/report_io.hpp"
#include "crashcar/spatial_weights.hpp"
#include "crashcar/stats.hpp"
#include "crashcar/synth.hpp"
#include "crashcar/taz_data.hpp"
