#pragma once

#include "se2net/backbone.hpp"
#include "se2net/checkpoint.hpp"
#include "se2net/config.hpp"
#include "se2net/crf.hpp"
#include "se2net/data_pipeline.hpp"
#include "se2net/fusion.hpp"
#include "se2net/harness.hpp"
#include "se2net/io.hpp"
#include "se2net/metrics.hpp"
#include "se2net/model.hpp"
#include "se2net/objective.hpp"
#include "se2net/refine.hpp"
#include "se2net/stages.hpp"
#include "se2net/trainer.hpp"
