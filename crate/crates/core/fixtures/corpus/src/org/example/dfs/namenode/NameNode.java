package org.example.dfs.namenode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class NameNode {
    private static final Logger LOG = LoggerFactory.getLogger(NameNode.class);

    private final BlockManager blockManager;
    private long nextId;

    public NameNode(BlockManager blockManager) {
        this.blockManager = blockManager;
    }

    public Block allocateBlock(String path, String client) {
        Block b = new Block(nextId++, 0);
        LOG.info("BLOCK* allocateBlock: " + path + ". " + b);
        blockManager.addStoredBlock(b, client, true);
        return b;
    }

    public void completeFile(String path, Block last) {
        if (last == null) {
            LOG.warn("completeFile: " + path + " has no last block");
            return;
        }
        blockManager.addStoredBlock(last, null, false);
        LOG.info("DIR* completeFile: " + path + " is closed");
    }
}
