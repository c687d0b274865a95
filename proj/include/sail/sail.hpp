#pragma once

#include "sail/config.hpp"
#include "sail/embed_store.hpp"
#include "sail/evalsuite.hpp"
#include "sail/heads.hpp"
#include "sail/linalg.hpp"
#include "sail/losses.hpp"
#include "sail/optim.hpp"
#include "sail/report.hpp"
#include "sail/synthetic.hpp"
#include "sail/trainer.hpp"
