#pragma once

#include <escv/common.hpp>
#include <escv/csv.hpp>
#include <escv/dataset.hpp>
#include <escv/distributions.hpp>
#include <escv/lasso_path.hpp>
#include <escv/loss.hpp>
#include <escv/m_estimators.hpp>
#include <escv/montecarlo.hpp>
#include <escv/parallel.hpp>
#include <escv/regime.hpp>
#include <escv/stability.hpp>
