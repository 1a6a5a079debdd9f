#pragma once

#include "umtn/error.hpp"
#include "umtn/kernels.hpp"
#include "umtn/sites.hpp"
#include "umtn/dataset.hpp"
#include "umtn/interpolation.hpp"
#include "umtn/collocation.hpp"
#include "umtn/parallel.hpp"
#include "umtn/datagen.hpp"
#include "umtn/autodiff.hpp"
#include "umtn/model.hpp"
#include "umtn/training.hpp"
#include "umtn/evaluation.hpp"
#include "umtn/config.hpp"
#include "umtn/io.hpp"
