#pragma once

#include "buscbm/cohort.hpp"
#include "buscbm/dataset.hpp"
#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/heads.hpp"
#include "buscbm/intervention.hpp"
#include "buscbm/io.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/metrics.hpp"
#include "buscbm/random.hpp"
#include "buscbm/records.hpp"
#include "buscbm/simulate.hpp"
#include "buscbm/report.hpp"
#include "buscbm/service.hpp"
#include "buscbm/tuning.hpp"
