#pragma once

#include "ergolab/angle.hpp"
#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/entangle.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/jdlg.hpp"
#include "ergolab/limit.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/random.hpp"
#include "ergolab/semigroup.hpp"
#include "ergolab/series.hpp"
#include "ergolab/summation.hpp"
#include "ergolab/volterra.hpp"
