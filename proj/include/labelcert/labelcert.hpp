#pragma once

#include "labelcert/error.hpp"
#include "labelcert/numeric.hpp"
#include "labelcert/dataset.hpp"
#include "labelcert/regression.hpp"
#include "labelcert/convex_solver.hpp"
#include "labelcert/tight_bound.hpp"
#include "labelcert/certify_binary.hpp"
#include "labelcert/certify_multiclass.hpp"
#include "labelcert/sampling.hpp"
#include "labelcert/parallel.hpp"
#include "labelcert/attack.hpp"
#include "labelcert/synthetic.hpp"
#include "labelcert/verify.hpp"
#include "labelcert/io.hpp"
